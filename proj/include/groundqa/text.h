#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace groundqa {

/// Splits text into lowercase ASCII alphanumeric runs. No stemming.
std::vector<std::string> tokenize(std::string_view text);

/// Pluggable tokenizer used by the lexical index and the dense test embedder.
using Tokenizer = std::function<std::vector<std::string>(std::string_view)>;

/// True for common English function words ignored when counting content terms.
bool is_stopword(std::string_view token);

/// tokenize() minus stopwords, order preserved, duplicates kept.
std::vector<std::string> content_terms(std::string_view text);

/// Whitespace-delimited token count; the default evidence token counter.
std::size_t whitespace_token_count(std::string_view text);

using TokenCounter = std::function<std::size_t(std::string_view)>;

std::string to_lower(std::string_view s);

/// 64-bit FNV-1a. Stable across platforms, used for feature hashing and
/// content-hash dedup keys.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL);

std::string hex64(std::uint64_t v);

/// First sentence of text (up to and including the first '.', '!' or '?'
/// followed by whitespace or end of text).
std::string first_sentence(std::string_view text);

}  // namespace groundqa

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace groundqa {

// URL grammar shared by the reward engine and the streaming guardrail.
//
//   url     = scheme "://" lead *urlchar      ; then trailing punctuation stripped
//   scheme  = "http" / "https"                ; case-insensitive
//   lead    = ALPHA / DIGIT
//   urlchar = ALPHA / DIGIT / "-" / "." / "_" / "~" / "!" / "$" / "&" / "(" / ")"
//           / "*" / "+" / "," / ";" / "=" / ":" / "@" / "/" / "?" / "#" / "%"
//   strip   = "." / "," / ";" / ":" / ")" / "]" / "}" / DQUOTE   ; removed from the end, repeatedly
//
// A match may start anywhere (no word boundary is required) and extends over
// the maximal run of urlchar. Canonical form lowercases the scheme and the
// authority (everything before the first "/", "?" or "#" after "://"); path,
// query and fragment are kept verbatim.

bool is_url_char(char c);
bool is_trailing_punct(char c);

/// Length of "http://" or "https://" at text[pos], case-insensitive.
std::optional<std::size_t> scheme_length_at(std::string_view text, std::size_t pos);

/// Number of trailing strip characters at the end of raw.
std::size_t trailing_punct_length(std::string_view raw);

struct UrlMatch {
  std::size_t begin = 0;
  std::size_t length = 0;     // raw span length after stripping
  std::string canonical;
};

std::vector<UrlMatch> find_urls(std::string_view text);

/// Ordered set of canonical URLs, first occurrence wins.
std::vector<std::string> extract_urls(std::string_view text);

/// Canonicalizes a single raw URL span (strips trailing punctuation, lowercases
/// scheme and authority).
std::string canonicalize_url(std::string_view raw);

}  // namespace groundqa

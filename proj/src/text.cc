#include "groundqa/text.h"

#include <array>
#include <cctype>
#include <cstdio>
#include <unordered_set>

namespace groundqa {

namespace {

bool is_alnum(unsigned char c) { return std::isalnum(c) != 0 && c < 0x80; }

const std::unordered_set<std::string_view>& stopwords() {
  static const std::unordered_set<std::string_view> words = {
      "a",     "about", "an",    "and",   "are",   "as",    "at",    "be",
      "by",    "can",   "could", "did",   "do",    "does",  "for",   "from",
      "has",   "have",  "how",   "i",     "if",    "in",    "into",  "is",
      "it",    "its",   "may",   "me",    "my",    "of",    "on",    "or",
      "our",   "should", "so",   "than",  "that",  "the",   "their", "them",
      "then",  "there", "these", "they",  "this",  "those", "to",    "was",
      "we",    "were",  "what",  "when",  "where", "which", "who",   "why",
      "will",  "with",  "would", "you",   "your",
  };
  return words;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    auto c = static_cast<unsigned char>(ch);
    if (is_alnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

bool is_stopword(std::string_view token) { return stopwords().contains(token); }

std::vector<std::string> content_terms(std::string_view text) {
  std::vector<std::string> out;
  for (auto& t : tokenize(text)) {
    if (!is_stopword(t)) out.push_back(std::move(t));
  }
  return out;
}

std::size_t whitespace_token_count(std::string_view text) {
  std::size_t n = 0;
  bool in_token = false;
  for (char ch : text) {
    bool ws = std::isspace(static_cast<unsigned char>(ch)) != 0;
    if (!ws && !in_token) ++n;
    in_token = !ws;
  }
  return n;
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (auto& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return out;
}

std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (char ch : data) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  std::array<char, 17> buf{};
  std::snprintf(buf.data(), buf.size(), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf.data(), 16);
}

std::string first_sentence(std::string_view text) {
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (c == '.' || c == '!' || c == '?') {
      if (i + 1 == text.size() || std::isspace(static_cast<unsigned char>(text[i + 1]))) {
        return std::string(text.substr(0, i + 1));
      }
    }
  }
  return std::string(text);
}

}  // namespace groundqa

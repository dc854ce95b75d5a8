#include "groundqa/url.h"

#include <cctype>
#include <unordered_set>

namespace groundqa {

bool is_url_char(char c) {
  auto u = static_cast<unsigned char>(c);
  if (u >= 0x80) return false;
  if (std::isalnum(u)) return true;
  switch (c) {
    case '-': case '.': case '_': case '~': case '!': case '$': case '&':
    case '(': case ')': case '*': case '+': case ',': case ';': case '=':
    case ':': case '@': case '/': case '?': case '#': case '%':
      return true;
    default:
      return false;
  }
}

bool is_trailing_punct(char c) {
  switch (c) {
    case '.': case ',': case ';': case ':': case ')': case ']': case '}': case '"':
      return true;
    default:
      return false;
  }
}

std::optional<std::size_t> scheme_length_at(std::string_view text, std::size_t pos) {
  auto lower_at = [&](std::size_t i) -> char {
    return i < text.size() ? static_cast<char>(std::tolower(static_cast<unsigned char>(text[i]))) : '\0';
  };
  if (lower_at(pos) != 'h' || lower_at(pos + 1) != 't' || lower_at(pos + 2) != 't' ||
      lower_at(pos + 3) != 'p') {
    return std::nullopt;
  }
  std::size_t i = pos + 4;
  if (lower_at(i) == 's') ++i;
  if (i + 3 > text.size() || text[i] != ':' || text[i + 1] != '/' || text[i + 2] != '/') {
    return std::nullopt;
  }
  return i + 3 - pos;
}

std::size_t trailing_punct_length(std::string_view raw) {
  std::size_t n = 0;
  while (n < raw.size() && is_trailing_punct(raw[raw.size() - 1 - n])) ++n;
  return n;
}

std::string canonicalize_url(std::string_view raw) {
  raw.remove_suffix(trailing_punct_length(raw));
  std::string out(raw);
  auto sep = out.find("://");
  std::size_t authority_end = out.size();
  if (sep != std::string::npos) {
    authority_end = out.find_first_of("/?#", sep + 3);
    if (authority_end == std::string::npos) authority_end = out.size();
  }
  for (std::size_t i = 0; i < authority_end; ++i) {
    out[i] = static_cast<char>(std::tolower(static_cast<unsigned char>(out[i])));
  }
  return out;
}

std::vector<UrlMatch> find_urls(std::string_view text) {
  std::vector<UrlMatch> out;
  std::size_t i = 0;
  while (i < text.size()) {
    auto scheme = scheme_length_at(text, i);
    std::size_t lead = i + scheme.value_or(0);
    if (!scheme || lead >= text.size() ||
        !std::isalnum(static_cast<unsigned char>(text[lead])) ||
        static_cast<unsigned char>(text[lead]) >= 0x80) {
      ++i;
      continue;
    }
    std::size_t end = lead;
    while (end < text.size() && is_url_char(text[end])) ++end;
    auto raw = text.substr(i, end - i);
    std::size_t len = raw.size() - trailing_punct_length(raw);
    out.push_back(UrlMatch{i, len, canonicalize_url(raw)});
    i = end;
  }
  return out;
}

std::vector<std::string> extract_urls(std::string_view text) {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (auto& m : find_urls(text)) {
    if (seen.insert(m.canonical).second) out.push_back(std::move(m.canonical));
  }
  return out;
}

}  // namespace groundqa

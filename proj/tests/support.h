#pragma once

// Test-only helpers shared by unit_tests and acceptance.

#include <cctype>
#include <cstdint>
#include <random>
#include <regex>
#include <set>
#include <string>
#include <vector>

namespace testsupport {

inline std::size_t below(std::mt19937_64& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

inline bool alnum(char c) {
  auto u = static_cast<unsigned char>(c);
  return u < 0x80 && std::isalnum(u) != 0;
}

inline std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

/// URL spans found by a plain regex, trailing punctuation removed.
struct Span {
  std::size_t begin, length;
  std::string raw;
};

inline std::vector<Span> regex_urls(const std::string& text) {
  static const std::regex re(R"([Hh][Tt][Tt][Pp][Ss]?://[A-Za-z0-9][-A-Za-z0-9._~!$&()*+,;=:@/?#%]*)");
  std::vector<Span> out;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), re); it != std::sregex_iterator(); ++it) {
    std::string raw = it->str();
    while (!raw.empty() && std::string(".,;:)]}\"").find(raw.back()) != std::string::npos) raw.pop_back();
    out.push_back({static_cast<std::size_t>(it->position()), raw.size(), raw});
  }
  return out;
}

/// Lowercase scheme and authority.
inline std::string canonical(const std::string& raw) {
  auto sep = raw.find("://");
  auto end = raw.find_first_of("/?#", sep + 3);
  if (end == std::string::npos) end = raw.size();
  return lower(raw.substr(0, end)) + raw.substr(end);
}

/// Non-streaming reference for the guardrail: each regex URL is kept when
/// `valid` says so, otherwise replaced; blocked words outside URLs become
/// one glyph per byte. Only meaningful for URLs under the length cap.
template <class Valid>
std::string reference_filter(const std::string& text, Valid valid, const std::set<std::string>& blocked,
                             const std::string& placeholder, const std::string& glyph) {
  std::string out;
  auto words = [&](const std::string& seg) {
    std::size_t i = 0;
    while (i < seg.size()) {
      if (!alnum(seg[i])) {
        out += seg[i++];
        continue;
      }
      std::size_t j = i;
      while (j < seg.size() && alnum(seg[j])) ++j;
      std::string w = seg.substr(i, j - i);
      if (blocked.count(lower(w))) {
        for (std::size_t k = 0; k < w.size(); ++k) out += glyph;
      } else {
        out += w;
      }
      i = j;
    }
  };
  std::size_t at = 0;
  for (const auto& s : regex_urls(text)) {
    words(text.substr(at, s.begin - at));
    out += valid(canonical(s.raw)) ? s.raw : placeholder;
    at = s.begin + s.length;
  }
  words(text.substr(at));
  return out;
}

/// Random model-ish output mixing prose, blocked words, near-miss schemes
/// and URLs from the given pools.
struct StreamGen {
  std::vector<std::string> urls;
  std::vector<std::string> blocked;

  std::string operator()(std::mt19937_64& rng) const {
    static const std::vector<std::string> words = {
        "the", "refund", "policy", "Account", "see", "here", "billing", "h", "ht", "http", "https", "HTTP",
        "http:", "http:/", "https:/", "htp://x.com", "http://", "https://-bad", "café", "x", "42"};
    static const std::vector<std::string> seps = {" ", " ", " ", "\n", ", ", ". ", "(", ")", "\"", ": ", "", "'"};
    static const std::vector<std::string> tails = {"", "", ".", ",", ")", ".)", "\"", ";", ":", "]", "}"};
    std::string s;
    const std::size_t n = 1 + below(rng, 24);
    for (std::size_t i = 0; i < n; ++i) {
      const auto r = below(rng, 10);
      if (r < 3 && !urls.empty()) {
        std::string u = urls[below(rng, urls.size())];
        if (below(rng, 4) == 0) {  // shout the scheme and host
          auto end = u.find_first_of("/?#", u.find("://") + 3);
          for (std::size_t k = 0; k < std::min(end, u.size()); ++k)
            u[k] = static_cast<char>(std::toupper(static_cast<unsigned char>(u[k])));
        }
        s += u + tails[below(rng, tails.size())];
      } else if (r < 4 && !blocked.empty()) {
        std::string w = blocked[below(rng, blocked.size())];
        if (below(rng, 2)) w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
        if (below(rng, 5) == 0) w += "s";  // not a whole-token match
        s += w;
      } else {
        s += words[below(rng, words.size())];
      }
      s += seps[below(rng, seps.size())];
    }
    return s;
  }
};

/// Random split of text into pieces (possibly empty).
inline std::vector<std::string> random_chunks(const std::string& text, std::mt19937_64& rng) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const std::size_t len = below(rng, 4) == 0 ? 0 : 1 + below(rng, 12);
    out.push_back(text.substr(i, len));
    i += len;
  }
  return out;
}

}  // namespace testsupport

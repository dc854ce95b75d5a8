#include <doctest.h>

#include "groundqa/text.h"
#include "groundqa/url.h"

using namespace groundqa;

TEST_CASE("tokenize lowercases alphanumeric runs") {
  CHECK(tokenize("Ad-Review, 2nd pass!") == std::vector<std::string>{"ad", "review", "2nd", "pass"});
  CHECK(tokenize("").empty());
  CHECK(tokenize("caf\xC3\xA9 ok") == std::vector<std::string>{"caf", "ok"});
}

TEST_CASE("content terms drop stopwords") {
  CHECK(content_terms("How long does the review take") == std::vector<std::string>{"long", "review", "take"});
}

TEST_CASE("whitespace token count") {
  CHECK(whitespace_token_count("") == 0);
  CHECK(whitespace_token_count("  a  bb\tc\n") == 3);
}

TEST_CASE("fnv1a64 known vectors") {
  // Published FNV-1a 64-bit test values.
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("first sentence") {
  CHECK(first_sentence("Refunds take five days. Contact billing.") == "Refunds take five days.");
  CHECK(first_sentence("no terminator") == "no terminator");
}

TEST_CASE("extract_urls: basic spans and trailing punctuation") {
  CHECK(extract_urls("see https://help.example.com/a/b.") == std::vector<std::string>{"https://help.example.com/a/b"});
  CHECK(extract_urls("(https://x.io/p)") == std::vector<std::string>{"https://x.io/p"});
  CHECK(extract_urls("\"http://x.io/q?a=1&b=2\",") == std::vector<std::string>{"http://x.io/q?a=1&b=2"});
  CHECK(extract_urls("link:https://x.io/a;") == std::vector<std::string>{"https://x.io/a"});
}

TEST_CASE("extract_urls: scheme rules") {
  CHECK(extract_urls("HTTPS://Help.Example.COM/Path").front() == "https://help.example.com/Path");
  CHECK(extract_urls("ftp://x.io").empty());
  CHECK(extract_urls("https://").empty());
  CHECK(extract_urls("https://-bad.io").empty());
  CHECK(extract_urls("http:/x.io").empty());
  // no word boundary needed
  CHECK(extract_urls("xhttps://a.io").front() == "https://a.io");
}

TEST_CASE("extract_urls: dedup keeps first occurrence order") {
  auto urls = extract_urls("https://b.io https://a.io HTTPS://B.IO");
  CHECK(urls == std::vector<std::string>{"https://b.io", "https://a.io"});
}

TEST_CASE("extract_urls stops at characters outside the URL alphabet") {
  CHECK(extract_urls("https://a.io/x'y").front() == "https://a.io/x");
  CHECK(extract_urls("https://a.io/x<y").front() == "https://a.io/x");
  CHECK(extract_urls("https://a.io/\xE2\x96\xA0").front() == "https://a.io/");
}

TEST_CASE("canonicalize keeps path case") {
  CHECK(canonicalize_url("HTTP://A.B/C?D#E).") == "http://a.b/C?D#E");
  CHECK(canonicalize_url("https://A.B?Q=1") == "https://a.b?Q=1");
}

TEST_CASE("find_urls reports raw spans") {
  const std::string text = "go to https://a.io/x. now";
  auto m = find_urls(text);
  REQUIRE(m.size() == 1);
  CHECK(text.substr(m[0].begin, m[0].length) == "https://a.io/x");
}

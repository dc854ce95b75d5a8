#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "groundqa/reward.h"

namespace groundqa {

struct GuardrailEvent {
  enum class Kind { url_redacted, url_passed, safety_redacted };

  Kind kind;
  std::string span;
  /// Byte offset of span in the input stream.
  std::size_t position = 0;

  bool operator==(const GuardrailEvent&) const = default;
};

std::string_view event_kind_name(GuardrailEvent::Kind k);
nlohmann::json event_to_json(const GuardrailEvent& e);

struct GuardrailConfig {
  std::string placeholder = "[link removed]";
  std::size_t max_url_length = 2048;
  /// Whole-token, case-insensitive terms; each matched byte becomes one "■".
  std::vector<std::string> blocklist;
  std::string block_glyph = "\xE2\x96\xA0";
};

/// Per-stream state. Not thread-safe: one stream, sequential calls.
struct GuardrailState {
  std::string held;            // bytes not yet emitted by the URL layer
  bool in_candidate = false;   // held starts with a confirmed URL candidate
  std::vector<GuardrailEvent> events;

  // internal bookkeeping
  std::size_t consumed = 0;    // stream offset of held[0]
  bool discarding = false;     // swallowing the tail of an over-long URL
  std::size_t scanned = 0;     // held[0..scanned) already matched as URL chars
  std::string pending_word;    // safety layer: unfinished alphanumeric run
  std::size_t pending_word_pos = 0;
  bool long_word = false;      // pending run already exceeds every term
};

/// Streaming URL and safety filter. URL candidates are held back until they
/// terminate, validated through the UrlValidator (evidence, prefix pool,
/// status probe, cached per stream) and either emitted verbatim or replaced
/// by the placeholder. The output depends only on the concatenated input,
/// never on how it was chunked.
class Guardrail {
 public:
  Guardrail(GuardrailConfig config, std::shared_ptr<UrlValidator> validator);

  std::string scan_chunk(GuardrailState& state, std::string_view chunk) const;
  std::string finalize(GuardrailState& state) const;

  /// scan_chunk over the whole text followed by finalize.
  std::string filter_all(std::string_view text, std::vector<GuardrailEvent>* events = nullptr) const;

  const GuardrailConfig& config() const { return config_; }

 private:
  std::string url_layer(GuardrailState& state, bool final) const;
  void safety_text(GuardrailState& state, std::string_view text, std::size_t pos, std::string& out) const;
  void safety_flush(GuardrailState& state, std::string& out) const;
  void emit_word(GuardrailState& state, std::string& out) const;
  void emit_url(GuardrailState& state, std::string_view candidate, std::size_t pos, std::string& out) const;

  GuardrailConfig config_;
  std::shared_ptr<UrlValidator> validator_;
  std::vector<std::string> blocked_;  // lowercased
  std::size_t longest_term_ = 0;
};

}  // namespace groundqa

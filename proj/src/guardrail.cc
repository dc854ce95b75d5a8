#include "groundqa/guardrail.h"

#include <algorithm>
#include <cctype>

#include "groundqa/text.h"
#include "groundqa/url.h"

namespace groundqa {

namespace {

bool ascii_alnum(char c) {
  auto u = static_cast<unsigned char>(c);
  return u < 0x80 && std::isalnum(u) != 0;
}

enum class SchemeState { match, partial, none };

/// Whether text[pos..] is "http://"/"https://" (len set), a proper prefix of
/// one of them, or neither.
SchemeState scheme_state(std::string_view text, std::size_t pos, std::size_t& len) {
  if (auto n = scheme_length_at(text, pos)) {
    len = *n;
    return SchemeState::match;
  }
  static constexpr std::string_view kSchemes[] = {"http://", "https://"};
  const auto rest = text.substr(pos);
  for (auto scheme : kSchemes) {
    if (rest.size() >= scheme.size()) continue;
    bool prefix = true;
    for (std::size_t i = 0; i < rest.size(); ++i) {
      if (std::tolower(static_cast<unsigned char>(rest[i])) != scheme[i]) {
        prefix = false;
        break;
      }
    }
    if (prefix) return SchemeState::partial;
  }
  return SchemeState::none;
}

}  // namespace

std::string_view event_kind_name(GuardrailEvent::Kind k) {
  switch (k) {
    case GuardrailEvent::Kind::url_redacted: return "url_redacted";
    case GuardrailEvent::Kind::url_passed: return "url_passed";
    case GuardrailEvent::Kind::safety_redacted: return "safety_redacted";
  }
  return "unknown";
}

nlohmann::json event_to_json(const GuardrailEvent& e) {
  return {{"kind", event_kind_name(e.kind)}, {"span", e.span}, {"position", e.position}};
}

Guardrail::Guardrail(GuardrailConfig config, std::shared_ptr<UrlValidator> validator)
    : config_(std::move(config)), validator_(std::move(validator)) {
  if (config_.max_url_length < 16) throw Error("max_url_length must be at least 16");
  if (config_.placeholder.find("http") != std::string::npos) throw Error("placeholder must not contain a URL");
  for (const auto& term : config_.blocklist) {
    auto toks = tokenize(term);
    if (toks.size() != 1 || toks.front().size() != term.size()) {
      throw Error("blocklist term must be a single alphanumeric token: " + term);
    }
    blocked_.push_back(toks.front());
    longest_term_ = std::max(longest_term_, term.size());
  }
}

std::string Guardrail::scan_chunk(GuardrailState& state, std::string_view chunk) const {
  state.held.append(chunk);
  return url_layer(state, false);
}

std::string Guardrail::finalize(GuardrailState& state) const {
  std::string out = url_layer(state, true);
  safety_flush(state, out);
  state.held.clear();
  state.in_candidate = false;
  state.discarding = false;
  state.scanned = 0;
  return out;
}

std::string Guardrail::filter_all(std::string_view text, std::vector<GuardrailEvent>* events) const {
  GuardrailState state;
  std::string out = scan_chunk(state, text);
  out += finalize(state);
  if (events) *events = std::move(state.events);
  return out;
}

std::string Guardrail::url_layer(GuardrailState& state, bool final) const {
  std::string out;
  const std::string_view held = state.held;
  const std::size_t n = held.size();
  std::size_t i = 0;
  state.in_candidate = false;

  while (i < n) {
    if (state.discarding) {
      while (i < n && is_url_char(held[i])) ++i;
      if (i < n) state.discarding = false;
      continue;
    }

    // Find the next position that starts, or may start, a URL candidate.
    std::size_t p = i;
    std::size_t scheme_len = 0;
    bool hold = false;
    bool candidate = false;
    for (; p < n; ++p) {
      if (held[p] != 'h' && held[p] != 'H') continue;
      auto st = scheme_state(held, p, scheme_len);
      if (st == SchemeState::partial) {
        if (final) continue;
        hold = true;
        break;
      }
      if (st == SchemeState::none) continue;
      const std::size_t lead = p + scheme_len;
      if (lead == n) {
        if (final) continue;
        hold = true;
        break;
      }
      if (ascii_alnum(held[lead])) {
        candidate = true;
        break;
      }
    }

    safety_text(state, held.substr(i, p - i), state.consumed + i, out);
    i = p;
    if (hold) break;
    if (!candidate) continue;

    safety_flush(state, out);
    std::size_t e = p + scheme_len;
    if (p == 0) e = std::max(e, state.scanned);  // resume a held candidate
    state.scanned = 0;
    while (e < n && is_url_char(held[e]) && e - p < config_.max_url_length) ++e;
    const bool at_cap = e - p == config_.max_url_length;
    if (e == n && !final) {
      state.in_candidate = true;  // undecided: need the next byte
      state.scanned = e - p;
      break;
    }
    if (at_cap && e < n && is_url_char(held[e])) {
      out += config_.placeholder;
      state.events.push_back({GuardrailEvent::Kind::url_redacted, std::string(held.substr(p, e - p)),
                              state.consumed + p});
      state.discarding = true;
      i = e;
      continue;
    }
    emit_url(state, held.substr(p, e - p), state.consumed + p, out);
    i = e;
  }

  state.held.erase(0, i);
  state.consumed += i;
  if (final) state.in_candidate = false;
  return out;
}

void Guardrail::emit_url(GuardrailState& state, std::string_view candidate, std::size_t pos, std::string& out) const {
  const std::size_t tail = trailing_punct_length(candidate);
  const auto raw = candidate.substr(0, candidate.size() - tail);
  const auto canonical = canonicalize_url(raw);
  const bool valid = validator_ && validator_->validate(canonical).valid;
  if (valid) {
    out.append(raw);
    state.events.push_back({GuardrailEvent::Kind::url_passed, std::string(raw), pos});
  } else {
    out += config_.placeholder;
    state.events.push_back({GuardrailEvent::Kind::url_redacted, std::string(raw), pos});
  }
  safety_text(state, candidate.substr(raw.size()), pos + raw.size(), out);
}

void Guardrail::safety_text(GuardrailState& state, std::string_view text, std::size_t pos, std::string& out) const {
  for (std::size_t k = 0; k < text.size(); ++k) {
    const char c = text[k];
    if (!ascii_alnum(c)) {
      safety_flush(state, out);
      out += c;
      continue;
    }
    if (state.long_word) {
      out += c;
      continue;
    }
    if (state.pending_word.empty()) state.pending_word_pos = pos + k;
    state.pending_word += c;
    if (state.pending_word.size() > longest_term_) {
      out += state.pending_word;
      state.pending_word.clear();
      state.long_word = true;
    }
  }
}

void Guardrail::safety_flush(GuardrailState& state, std::string& out) const {
  emit_word(state, out);
  state.long_word = false;
}

void Guardrail::emit_word(GuardrailState& state, std::string& out) const {
  if (state.pending_word.empty()) return;
  const auto lower = to_lower(state.pending_word);
  if (std::find(blocked_.begin(), blocked_.end(), lower) != blocked_.end()) {
    for (std::size_t k = 0; k < state.pending_word.size(); ++k) out += config_.block_glyph;
    state.events.push_back({GuardrailEvent::Kind::safety_redacted, state.pending_word, state.pending_word_pos});
  } else {
    out += state.pending_word;
  }
  state.pending_word.clear();
}

}  // namespace groundqa

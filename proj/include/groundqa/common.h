#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace groundqa {

/// Unix seconds.
using Timestamp = std::int64_t;

enum class Channel { graph, lexical, dense, hybrid };

std::string_view channel_name(Channel c);
Channel channel_from_name(std::string_view name);

/// Carrier for channel outputs. score is always finite.
struct ScoredChunk {
  std::string chunk_id;
  double score = 0.0;
  Channel channel = Channel::lexical;

  bool operator==(const ScoredChunk&) const = default;
};

/// Something went wrong but the pipeline kept going with a fallback.
struct DegradationEvent {
  std::string stage;
  std::string reason;
};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MalformedRecord : public Error {
 public:
  MalformedRecord(std::size_t index, const std::string& what)
      : Error("malformed record #" + std::to_string(index) + ": " + what), index_(index) {}
  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

class UnknownChunk : public Error {
 public:
  explicit UnknownChunk(const std::string& id) : Error("unknown chunk: " + id) {}
};

class EmptyIndex : public Error {
 public:
  EmptyIndex() : Error("lexical index is empty") {}
};

/// Raised by external clients (HTTP or stub) when a call fails or times out.
class ClientError : public Error {
 public:
  using Error::Error;
};

class EmptyCaseSet : public Error {
 public:
  EmptyCaseSet() : Error("evaluation case set is empty") {}
};

}  // namespace groundqa

#include "groundqa/common.h"

namespace groundqa {

std::string_view channel_name(Channel c) {
  switch (c) {
    case Channel::graph: return "graph";
    case Channel::lexical: return "lexical";
    case Channel::dense: return "dense";
    case Channel::hybrid: return "hybrid";
  }
  return "unknown";
}

Channel channel_from_name(std::string_view name) {
  if (name == "graph") return Channel::graph;
  if (name == "lexical") return Channel::lexical;
  if (name == "dense") return Channel::dense;
  if (name == "hybrid") return Channel::hybrid;
  throw Error("unknown channel: " + std::string(name));
}

}  // namespace groundqa

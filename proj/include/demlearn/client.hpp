#pragma once

#include <memory>

#include "demlearn/data.hpp"
#include "demlearn/model.hpp"
#include "demlearn/random.hpp"

namespace demlearn {

/// One learning agent: its data shard, personalized model w^(0), the update
/// proxy used for gradient-based clustering, and its private RNG stream.
struct ClientState {
  int id = 0;
  std::shared_ptr<const ClientShard> shard;
  ParamVector model;
  ParamVector last_delta;  // empty until the first local solve
  Rng rng;

  [[nodiscard]] bool has_delta() const { return last_delta.size() > 0; }
};

}  // namespace demlearn

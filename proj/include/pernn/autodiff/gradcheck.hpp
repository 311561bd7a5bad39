#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pernn/autodiff/tape.hpp"

namespace pernn::ad {

struct GradientCheck {
  double max_rel_error = 0.0;
  NodeId worst_parameter;
  Index worst_coordinate = 0;
  std::size_t coordinates = 0;
};

// Compares backward() against central finite differences on every coordinate
// of every trainable parameter. Error per coordinate is
// |g_ad - g_fd| / max(1, |g_fd|).
GradientCheck check_gradient(const Tape& tape, const Bindings& inputs, NodeId loss,
                             double epsilon = 1e-5, Mode mode = Mode::inference);

struct GradcheckCase {
  std::string name;
  Tape tape;
  Bindings inputs;
  NodeId loss;
  Mode mode = Mode::inference;
};

// One randomized 1-4 dimensional instance per node kind.
std::vector<GradcheckCase> node_kind_cases(std::uint64_t seed);

}  // namespace pernn::ad

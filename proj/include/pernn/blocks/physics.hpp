#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "pernn/autodiff/tape.hpp"

namespace pernn::blocks {

// Fixed operators mapping intermediate variables to the physics prediction.
// Constants must be parameters named "phys/..." with requires_grad = false.
class PhysicsBlock {
 public:
  virtual ~PhysicsBlock() = default;

  virtual std::string kind() const = 0;
  virtual std::vector<std::string> intermediate_names() const = 0;
  // Tape inputs (name, width) the block reads besides the intermediates.
  virtual std::vector<std::pair<std::string, ad::Index>> raw_inputs() const { return {}; }

  // Each intermediate is a (rows x 1) node; returns a (rows x 1) node.
  virtual ad::NodeId emit(ad::Tape& tape, std::span<const ad::NodeId> intermediates) const = 0;

  // Maps the additive model output onto the prediction target.
  virtual ad::NodeId emit_target(ad::Tape& tape, ad::NodeId output) const {
    (void)tape;
    return output;
  }

  // Throw DomainError naming the offending variable.
  virtual void check_inputs(const ad::Bindings& inputs) const { (void)inputs; }
  virtual void check_intermediates(const ad::Matrix& intermediates) const { (void)intermediates; }

  virtual nlohmann::json config() const = 0;
};

}  // namespace pernn::blocks

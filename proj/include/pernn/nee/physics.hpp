#pragma once

#include <memory>

#include "pernn/blocks/physics.hpp"
#include "pernn/nee/flux.hpp"

namespace pernn::nee {

inline constexpr const char* kTairInput = "tair";
inline constexpr const char* kNeeInput = "nee_t";

// Intermediates (E0, base respiration, dT/dt in degC per hour) -> dNEE/dt from
// the respiration ODE, read against the unscaled air temperature input. The
// target is the Euler forecast NEE_t + dNEE/dt * step.
class NeePhysics final : public blocks::PhysicsBlock {
 public:
  explicit NeePhysics(double step_seconds = kStep);

  std::string kind() const override { return "nee_ode"; }
  std::vector<std::string> intermediate_names() const override { return {"e0", "rb", "dT_dt"}; }
  std::vector<std::pair<std::string, ad::Index>> raw_inputs() const override {
    return {{kTairInput, 1}, {kNeeInput, 1}};
  }
  ad::NodeId emit(ad::Tape& tape, std::span<const ad::NodeId> intermediates) const override;
  ad::NodeId emit_target(ad::Tape& tape, ad::NodeId output) const override;
  void check_inputs(const ad::Bindings& inputs) const override;
  void check_intermediates(const ad::Matrix& intermediates) const override;
  nlohmann::json config() const override;

  double step_seconds() const { return step_; }

 private:
  double step_;
};

std::shared_ptr<const blocks::PhysicsBlock> nee_physics_from_config(const nlohmann::json& config);

}  // namespace pernn::nee

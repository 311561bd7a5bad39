#include "pernn/nee/physics.hpp"

#include "pernn/errors.hpp"

namespace pernn::nee {

NeePhysics::NeePhysics(double step_seconds) : step_(step_seconds) {
  if (!(step_seconds > 0.0)) throw ValidationError("step must be positive");
}

ad::NodeId NeePhysics::emit(ad::Tape& t, std::span<const ad::NodeId> in) const {
  if (in.size() != 3) throw ValidationError("respiration ODE block takes (E0, rb, dT/dt)");
  const ad::NodeId tair = t.input(kTairInput, 1);
  const ad::NodeId t0 = t.parameter("phys/t0", ad::Matrix::Constant(1, 1, kT0), false);
  const ad::NodeId inv_ref = t.parameter("phys/inv_ref_gap", ad::Matrix::Constant(1, 1, 1.0 / (kTref - kT0)), false);
  const ad::NodeId per_hour = t.parameter("phys/per_hour", ad::Matrix::Constant(1, 1, 1.0 / 3600.0), false);
  const ad::NodeId gap = t.subtract(tair, t0);
  const ad::NodeId r = t.multiply(in[1], t.exp(t.multiply(in[0], t.subtract(inv_ref, t.reciprocal(gap)))));
  const ad::NodeId slope = t.multiply(t.divide(in[0], t.square(gap)), r);
  return t.multiply(slope, t.multiply(in[2], per_hour));
}

ad::NodeId NeePhysics::emit_target(ad::Tape& t, ad::NodeId output) const {
  const ad::NodeId nee_t = t.input(kNeeInput, 1);
  const ad::NodeId dt = t.parameter("phys/step", ad::Matrix::Constant(1, 1, step_), false);
  return t.add(nee_t, t.multiply(output, dt));
}

void NeePhysics::check_inputs(const ad::Bindings& inputs) const {
  const auto it = inputs.find(kTairInput);
  if (it == inputs.end()) return;
  if ((it->second.array() <= kT0).any()) throw DomainError("tair", "air temperature must exceed T0");
}

void NeePhysics::check_intermediates(const ad::Matrix& m) const {
  if ((m.col(1).array() <= 0.0).any()) throw DomainError("rb", "base respiration must be positive");
}

nlohmann::json NeePhysics::config() const { return {{"kind", kind()}, {"step_seconds", step_}}; }

std::shared_ptr<const blocks::PhysicsBlock> nee_physics_from_config(const nlohmann::json& c) {
  if (c.value("kind", std::string()) != "nee_ode") throw ValidationError("not a respiration ODE block");
  return std::make_shared<NeePhysics>(c.at("step_seconds").get<double>());
}

}  // namespace pernn::nee

#pragma once

#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "pernn/autodiff/tape.hpp"
#include "pernn/blocks/layers.hpp"
#include "pernn/blocks/physics.hpp"

namespace pernn::blocks {

enum class Variant { pernn, penn, fcnn, pinn };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);
bool has_physics(Variant v);

enum class Squash { identity, sigmoid_range, tanh_range, softplus };

// One intermediate-variable output of the learning block.
struct HeadSpec {
  std::string name;
  Squash squash = Squash::identity;
  double lo = 0.0;
  double hi = 0.0;
  // Multiplies prediction and label inside intermediate-variable losses.
  double loss_scale = 1.0;
};

struct Architecture {
  Variant variant = Variant::pernn;
  ad::Index input_width = 1;
  std::vector<ad::Index> learning_widths;
  LayerStyle learning_style = LayerStyle::plain;
  Activation activation = Activation::leaky_relu;
  std::vector<HeadSpec> heads;
  std::vector<ad::Index> residual_widths;
  LayerStyle residual_style = LayerStyle::plain;
  // Fixed factor applied to the residual block's last layer.
  double residual_scale = 1.0;
  // Multiplies the initial weights of the residual block's last layer.
  double residual_init_gain = 1.0;
};

nlohmann::json to_json(const Architecture& a);
Architecture architecture_from_json(const nlohmann::json& j);

// Named tape outputs.
namespace out {
inline constexpr std::string_view intermediates = "intermediates";
inline constexpr std::string_view hidden = "hidden";
inline constexpr std::string_view physics = "physics";
inline constexpr std::string_view residual = "residual";
inline constexpr std::string_view output = "output";
inline constexpr std::string_view target = "target";
}  // namespace out

inline constexpr std::string_view kFeatureInput = "x";

struct Prediction {
  ad::Matrix intermediates;  // empty for FCNN / PINN
  ad::Matrix hidden;
  ad::Matrix physics;   // empty for FCNN / PINN
  ad::Matrix residual;  // empty unless PERNN
  ad::Matrix output;
  ad::Matrix target;
};

class PernnModel {
 public:
  PernnModel(Architecture arch, std::shared_ptr<const PhysicsBlock> physics, std::uint64_t seed);

  const Architecture& architecture() const { return arch_; }
  const PhysicsBlock* physics() const { return physics_.get(); }
  std::shared_ptr<const PhysicsBlock> physics_ptr() const { return physics_; }

  const ad::Tape& tape() const { return tape_; }
  ad::Tape& tape() { return tape_; }
  ad::NodeId node(std::string_view name) const { return tape_.output(name); }
  bool has(std::string_view name) const { return tape_.has_output(name); }

  // Inference-mode forward pass with physics-domain checks.
  Prediction predict(const ad::Bindings& inputs) const;

  // Trainable parameter counts.
  ad::Index parameter_count() const;
  ad::Index parameter_count(std::string_view prefix) const;

  // Free-form data carried through serialization (e.g. feature scaling).
  nlohmann::json metadata = nlohmann::json::object();

 private:
  Architecture arch_;
  std::shared_ptr<const PhysicsBlock> physics_;
  ad::Tape tape_;
};

// Plain affine stack parameter count: sum of in*out + out over layers.
ad::Index dense_stack_parameter_count(ad::Index in, const std::vector<ad::Index>& widths);

inline constexpr std::uint32_t kModelFormatVersion = 1;

using PhysicsFactory =
    std::function<std::shared_ptr<const PhysicsBlock>(const nlohmann::json& config)>;

std::string serialize(const PernnModel& model);
PernnModel deserialize(const std::string& bytes, const PhysicsFactory& factory);
void save_model(const PernnModel& model, const std::string& path);
PernnModel load_model(const std::string& path, const PhysicsFactory& factory);

}  // namespace pernn::blocks

#pragma once

#include <string>
#include <vector>

#include "pernn/autodiff/tape.hpp"
#include "pernn/random.hpp"

namespace pernn::blocks {

enum class Activation { leaky_relu, tanh };
enum class LayerStyle { plain, skip_batchnorm };

std::string to_string(Activation a);
std::string to_string(LayerStyle s);
Activation activation_from_string(const std::string& s);
LayerStyle layer_style_from_string(const std::string& s);

ad::NodeId activate(ad::Tape& tape, ad::NodeId x, Activation a);

// Uniform fan-in scaled weights, U(-sqrt(6/fan_in), sqrt(6/fan_in)).
ad::Matrix kaiming_uniform(Rng& rng, ad::Index fan_in, ad::Index fan_out);

// affine(x) with fresh parameters "<prefix>/W" and "<prefix>/b".
ad::NodeId dense(ad::Tape& tape, ad::NodeId x, ad::Index in, ad::Index out,
                 const std::string& prefix, Rng& rng);

// y = Proj([x ; act(bn(affine(x)))]), Proj affine to out_width.
ad::NodeId skip_layer(ad::Tape& tape, ad::NodeId x, ad::Index in, ad::Index hidden, ad::Index out,
                      const std::string& prefix, Rng& rng, Activation act,
                      bool identity_init = false);

// Trainable parameter count of one skip layer.
ad::Index skip_layer_parameter_count(ad::Index in, ad::Index hidden, ad::Index out);

struct SkipLayerFragment {
  ad::Tape tape;
  ad::NodeId input;
  ad::NodeId output;
};

// Standalone single skip layer reading input "x".
SkipLayerFragment build_skip_layer(ad::Index in_width, ad::Index hidden_width, ad::Index out_width,
                                   std::uint64_t seed = 0, bool identity_init = false,
                                   Activation act = Activation::leaky_relu);

// Hidden stack: each entry of `widths` is one layer. Returns the last output.
ad::NodeId hidden_stack(ad::Tape& tape, ad::NodeId x, ad::Index in, const std::vector<ad::Index>& widths,
                        LayerStyle style, Activation act, const std::string& prefix, Rng& rng);

}  // namespace pernn::blocks

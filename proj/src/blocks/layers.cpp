#include "pernn/blocks/layers.hpp"

#include <cmath>

#include "pernn/errors.hpp"

namespace pernn::blocks {

std::string to_string(Activation a) { return a == Activation::tanh ? "tanh" : "leaky_relu"; }

std::string to_string(LayerStyle s) { return s == LayerStyle::plain ? "plain" : "skip_batchnorm"; }

Activation activation_from_string(const std::string& s) {
  if (s == "leaky_relu") return Activation::leaky_relu;
  if (s == "tanh") return Activation::tanh;
  throw ValidationError("unknown activation '" + s + "'");
}

LayerStyle layer_style_from_string(const std::string& s) {
  if (s == "plain") return LayerStyle::plain;
  if (s == "skip_batchnorm") return LayerStyle::skip_batchnorm;
  throw ValidationError("unknown layer style '" + s + "'");
}

ad::NodeId activate(ad::Tape& tape, ad::NodeId x, Activation a) {
  return a == Activation::tanh ? tape.tanh(x) : tape.leaky_relu(x);
}

ad::Matrix kaiming_uniform(Rng& rng, ad::Index fan_in, ad::Index fan_out) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  ad::Matrix w(fan_in, fan_out);
  // Row-major fill so the draw order does not depend on Eigen storage.
  for (ad::Index i = 0; i < fan_in; ++i)
    for (ad::Index j = 0; j < fan_out; ++j) w(i, j) = u(rng);
  return w;
}

ad::NodeId dense(ad::Tape& tape, ad::NodeId x, ad::Index in, ad::Index out,
                 const std::string& prefix, Rng& rng) {
  if (in < 1 || out < 1) throw ValidationError("layer widths must be >= 1");
  ad::NodeId w = tape.parameter(prefix + "/W", kaiming_uniform(rng, in, out));
  ad::NodeId b = tape.parameter(prefix + "/b", ad::Matrix::Zero(1, out));
  return tape.affine(x, w, b);
}

ad::NodeId skip_layer(ad::Tape& tape, ad::NodeId x, ad::Index in, ad::Index hidden, ad::Index out,
                      const std::string& prefix, Rng& rng, Activation act, bool identity_init) {
  if (in < 1 || hidden < 1 || out < 1) throw ValidationError("skip layer widths must be >= 1");
  ad::NodeId h = dense(tape, x, in, hidden, prefix + "/inner", rng);
  ad::NodeId gamma = tape.parameter(prefix + "/bn_gamma", ad::Matrix::Ones(1, hidden));
  ad::NodeId beta = tape.parameter(prefix + "/bn_beta", ad::Matrix::Zero(1, hidden));
  ad::NodeId rm = tape.parameter(prefix + "/bn_running_mean", ad::Matrix::Zero(1, hidden), false);
  ad::NodeId rv = tape.parameter(prefix + "/bn_running_var", ad::Matrix::Ones(1, hidden), false);
  ad::NodeId a = activate(tape, tape.batch_normalize(h, gamma, beta, rm, rv), act);
  const ad::NodeId parts[] = {x, a};
  ad::NodeId cat = tape.concatenate(parts);
  ad::Matrix pw = kaiming_uniform(rng, in + hidden, out);
  if (identity_init) {
    pw.setZero();
    for (ad::Index k = 0; k < std::min(in, out); ++k) pw(k, k) = 1.0;
  }
  ad::NodeId w = tape.parameter(prefix + "/proj/W", std::move(pw));
  ad::NodeId b = tape.parameter(prefix + "/proj/b", ad::Matrix::Zero(1, out));
  return tape.affine(cat, w, b);
}

ad::Index skip_layer_parameter_count(ad::Index in, ad::Index hidden, ad::Index out) {
  return in * hidden + hidden + 2 * hidden + (in + hidden) * out + out;
}

SkipLayerFragment build_skip_layer(ad::Index in_width, ad::Index hidden_width, ad::Index out_width,
                                   std::uint64_t seed, bool identity_init, Activation act) {
  SkipLayerFragment f;
  Rng rng = make_rng(seed, "init");
  f.input = f.tape.input("x", in_width);
  f.output = skip_layer(f.tape, f.input, in_width, hidden_width, out_width, "skip", rng, act,
                        identity_init);
  return f;
}

ad::NodeId hidden_stack(ad::Tape& tape, ad::NodeId x, ad::Index in, const std::vector<ad::Index>& widths,
                        LayerStyle style, Activation act, const std::string& prefix, Rng& rng) {
  ad::NodeId h = x;
  ad::Index width = in;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    const std::string name = prefix + "/l" + std::to_string(i);
    if (style == LayerStyle::plain) {
      h = activate(tape, dense(tape, h, width, widths[i], name, rng), act);
    } else {
      h = skip_layer(tape, h, width, widths[i], widths[i], name, rng, act);
    }
    width = widths[i];
  }
  return h;
}

}  // namespace pernn::blocks

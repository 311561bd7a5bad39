#include "pernn/blocks/model.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "pernn/errors.hpp"

namespace pernn::blocks {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::pernn: return "PERNN";
    case Variant::penn: return "PENN";
    case Variant::fcnn: return "FCNN";
    case Variant::pinn: return "PINN";
  }
  return "?";
}

Variant variant_from_string(const std::string& s) {
  std::string u;
  for (char c : s) u.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  if (u == "PERNN") return Variant::pernn;
  if (u == "PENN") return Variant::penn;
  if (u == "FCNN") return Variant::fcnn;
  if (u == "PINN") return Variant::pinn;
  throw ValidationError("unknown variant '" + s + "'");
}

bool has_physics(Variant v) { return v == Variant::pernn || v == Variant::penn; }

namespace {

std::string squash_name(Squash s) {
  switch (s) {
    case Squash::identity: return "identity";
    case Squash::sigmoid_range: return "sigmoid_range";
    case Squash::tanh_range: return "tanh_range";
    case Squash::softplus: return "softplus";
  }
  return "?";
}

Squash squash_from_string(const std::string& s) {
  if (s == "identity") return Squash::identity;
  if (s == "sigmoid_range") return Squash::sigmoid_range;
  if (s == "tanh_range") return Squash::tanh_range;
  if (s == "softplus") return Squash::softplus;
  throw ValidationError("unknown squash '" + s + "'");
}

ad::NodeId apply_squash(ad::Tape& t, ad::NodeId z, const HeadSpec& h) {
  switch (h.squash) {
    case Squash::identity: return z;
    case Squash::sigmoid_range:
      return t.add(t.scalar(h.lo), t.multiply(t.scalar(h.hi - h.lo), t.sigmoid(z)));
    case Squash::tanh_range:
      return t.add(t.scalar(0.5 * (h.lo + h.hi)), t.multiply(t.scalar(0.5 * (h.hi - h.lo)), t.tanh(z)));
    case Squash::softplus: return t.softplus(z);
  }
  return z;
}

void validate(const Architecture& a, const PhysicsBlock* physics) {
  if (a.input_width < 1) throw ValidationError("input width must be >= 1");
  if (a.learning_widths.empty()) throw ValidationError("learning block needs at least one hidden layer");
  for (auto w : a.learning_widths)
    if (w < 1) throw ValidationError("learning widths must be >= 1");
  for (auto w : a.residual_widths)
    if (w < 1) throw ValidationError("residual widths must be >= 1");
  if (has_physics(a.variant)) {
    if (!physics) throw ValidationError(to_string(a.variant) + " needs a physics block");
    if (a.heads.size() != physics->intermediate_names().size()) {
      throw ValidationError("head count does not match the physics block's intermediates");
    }
    const auto names = physics->intermediate_names();
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (a.heads[i].name != names[i]) {
        throw ValidationError("head '" + a.heads[i].name + "' does not match intermediate '" +
                              names[i] + "'");
      }
    }
  } else if (physics) {
    throw ValidationError(to_string(a.variant) + " has no physics block in its forward path");
  }
}

}  // namespace

nlohmann::json to_json(const Architecture& a) {
  nlohmann::json heads = nlohmann::json::array();
  for (const auto& h : a.heads) {
    heads.push_back({{"name", h.name}, {"squash", squash_name(h.squash)}, {"lo", h.lo},
                     {"hi", h.hi}, {"loss_scale", h.loss_scale}});
  }
  return {{"variant", to_string(a.variant)},
          {"input_width", a.input_width},
          {"learning_widths", a.learning_widths},
          {"learning_style", to_string(a.learning_style)},
          {"activation", to_string(a.activation)},
          {"heads", heads},
          {"residual_widths", a.residual_widths},
          {"residual_style", to_string(a.residual_style)},
          {"residual_scale", a.residual_scale},
          {"residual_init_gain", a.residual_init_gain}};
}

Architecture architecture_from_json(const nlohmann::json& j) {
  try {
    Architecture a;
    a.variant = variant_from_string(j.at("variant").get<std::string>());
    a.input_width = j.at("input_width").get<ad::Index>();
    a.learning_widths = j.at("learning_widths").get<std::vector<ad::Index>>();
    a.learning_style = layer_style_from_string(j.at("learning_style").get<std::string>());
    a.activation = activation_from_string(j.at("activation").get<std::string>());
    for (const auto& h : j.at("heads")) {
      a.heads.push_back({h.at("name").get<std::string>(),
                         squash_from_string(h.at("squash").get<std::string>()),
                         h.at("lo").get<double>(), h.at("hi").get<double>(),
                         h.at("loss_scale").get<double>()});
    }
    a.residual_widths = j.at("residual_widths").get<std::vector<ad::Index>>();
    a.residual_style = layer_style_from_string(j.at("residual_style").get<std::string>());
    a.residual_scale = j.at("residual_scale").get<double>();
    a.residual_init_gain = j.value("residual_init_gain", 1.0);
    return a;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed architecture: ") + e.what());
  }
}

PernnModel::PernnModel(Architecture arch, std::shared_ptr<const PhysicsBlock> physics,
                       std::uint64_t seed)
    : arch_(std::move(arch)), physics_(std::move(physics)) {
  validate(arch_, physics_.get());
  Rng rng = make_rng(seed, "init");
  ad::Tape& t = tape_;
  const ad::NodeId x = t.input(std::string(kFeatureInput), arch_.input_width);
  const ad::NodeId hidden = hidden_stack(t, x, arch_.input_width, arch_.learning_widths,
                                         arch_.learning_style, arch_.activation, "learn", rng);
  const ad::Index hidden_width = arch_.learning_widths.back();
  t.set_output(std::string(out::hidden), hidden);

  if (!has_physics(arch_.variant)) {
    const ad::NodeId y = dense(t, hidden, hidden_width, 1, "learn/out", rng);
    t.set_output(std::string(out::output), y);
    t.set_output(std::string(out::target), y);
    return;
  }

  const auto k = static_cast<ad::Index>(arch_.heads.size());
  const ad::NodeId z = dense(t, hidden, hidden_width, k, "learn/head", rng);
  std::vector<ad::NodeId> inter;
  for (ad::Index i = 0; i < k; ++i) {
    inter.push_back(apply_squash(t, t.slice(z, i, 1), arch_.heads[static_cast<std::size_t>(i)]));
  }
  t.set_output(std::string(out::intermediates), t.concatenate(inter));
  const ad::NodeId phys = physics_->emit(t, inter);
  t.set_output(std::string(out::physics), phys);

  ad::NodeId output = phys;
  if (arch_.variant == Variant::pernn) {
    ad::NodeId r = hidden_stack(t, hidden, hidden_width, arch_.residual_widths, arch_.residual_style,
                                arch_.activation, "res", rng);
    const ad::Index rw = arch_.residual_widths.empty() ? hidden_width : arch_.residual_widths.back();
    r = dense(t, r, rw, 1, "res/out", rng);
    if (arch_.residual_init_gain != 1.0) {
      t.parameter_value(*t.find_parameter("res/out/W")) *= arch_.residual_init_gain;
    }
    if (arch_.residual_scale != 1.0) r = t.multiply(r, t.scalar(arch_.residual_scale));
    t.set_output(std::string(out::residual), r);
    output = t.add(phys, r);
  }
  t.set_output(std::string(out::output), output);
  t.set_output(std::string(out::target), physics_->emit_target(t, output));
}

Prediction PernnModel::predict(const ad::Bindings& inputs) const {
  if (physics_) physics_->check_inputs(inputs);
  ad::Evaluation ev;
  try {
    ev = ad::forward(tape_, inputs, ad::Mode::inference);
  } catch (const NumericError&) {
    // Report an out-of-domain intermediate by name when that is the cause.
    if (has(out::intermediates)) {
      const auto partial = ad::forward_prefix(tape_, inputs, ad::Mode::inference, node(out::intermediates));
      physics_->check_intermediates(partial.value(node(out::intermediates)));
    }
    throw;
  }
  Prediction p;
  if (has(out::intermediates)) {
    p.intermediates = ev.value(node(out::intermediates));
    physics_->check_intermediates(p.intermediates);
    p.physics = ev.value(node(out::physics));
  }
  if (has(out::residual)) p.residual = ev.value(node(out::residual));
  p.hidden = ev.value(node(out::hidden));
  p.output = ev.value(node(out::output));
  p.target = ev.value(node(out::target));
  return p;
}

ad::Index PernnModel::parameter_count() const { return parameter_count(""); }

ad::Index PernnModel::parameter_count(std::string_view prefix) const {
  ad::Index n = 0;
  for (ad::NodeId p : tape_.trainable_parameters()) {
    if (tape_.node(p).name.starts_with(prefix)) n += tape_.parameter_value(p).size();
  }
  return n;
}

ad::Index dense_stack_parameter_count(ad::Index in, const std::vector<ad::Index>& widths) {
  ad::Index n = 0;
  for (ad::Index w : widths) {
    n += in * w + w;
    in = w;
  }
  return n;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

constexpr char kMagic[8] = {'P', 'E', 'R', 'N', 'N', 'M', 'D', 'L'};

void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const std::string& s, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[at + i])) << (8 * i);
  return v;
}

void put_f64(std::string& s, double d) {
  const auto bits = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) s.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

double get_f64(const std::string& s, std::size_t at) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[at + i])) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

std::string serialize(const PernnModel& model) {
  nlohmann::json params = nlohmann::json::array();
  const auto ids = model.tape().parameters();
  for (ad::NodeId p : ids) {
    const auto& m = model.tape().parameter_value(p);
    params.push_back({{"name", model.tape().node(p).name}, {"rows", m.rows()}, {"cols", m.cols()}});
  }
  nlohmann::json header = {{"format_version", kModelFormatVersion},
                           {"architecture", to_json(model.architecture())},
                           {"physics", model.physics() ? model.physics()->config() : nlohmann::json()},
                           {"metadata", model.metadata},
                           {"parameters", params}};
  const std::string h = header.dump();
  std::string bytes(kMagic, sizeof(kMagic));
  put_u32(bytes, kModelFormatVersion);
  put_u32(bytes, static_cast<std::uint32_t>(h.size()));
  bytes += h;
  for (ad::NodeId p : ids) {
    const auto& m = model.tape().parameter_value(p);
    for (ad::Index i = 0; i < m.rows(); ++i)
      for (ad::Index j = 0; j < m.cols(); ++j) put_f64(bytes, m(i, j));
  }
  return bytes;
}

PernnModel deserialize_unchecked(const std::string& bytes, const PhysicsFactory& factory) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw ValidationError("not a model file");
  }
  const std::uint32_t version = get_u32(bytes, 8);
  if (version != kModelFormatVersion) {
    throw ValidationError("unsupported model format version " + std::to_string(version));
  }
  const std::uint32_t hlen = get_u32(bytes, 12);
  if (bytes.size() < 16 + static_cast<std::size_t>(hlen)) throw ValidationError("truncated model header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(16, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed model header: ") + e.what());
  }
  Architecture arch = architecture_from_json(header.at("architecture"));
  std::shared_ptr<const PhysicsBlock> physics;
  if (!header.at("physics").is_null()) {
    if (!factory) throw ValidationError("model needs a physics block factory");
    physics = factory(header.at("physics"));
  }
  PernnModel model(std::move(arch), std::move(physics), 0);
  model.metadata = header.value("metadata", nlohmann::json::object());

  const auto ids = model.tape().parameters();
  const auto& plist = header.at("parameters");
  if (plist.size() != ids.size()) throw ValidationError("parameter list does not match architecture");
  std::size_t at = 16 + hlen;
  for (std::size_t k = 0; k < ids.size(); ++k) {
    ad::Matrix& m = model.tape().parameter_value(ids[k]);
    const auto& e = plist[k];
    if (e.at("name").get<std::string>() != model.tape().node(ids[k]).name ||
        e.at("rows").get<ad::Index>() != m.rows() || e.at("cols").get<ad::Index>() != m.cols()) {
      throw ValidationError("parameter '" + e.at("name").get<std::string>() + "' does not match architecture");
    }
    if (bytes.size() < at + 8 * static_cast<std::size_t>(m.size())) throw ValidationError("truncated weights");
    for (ad::Index i = 0; i < m.rows(); ++i)
      for (ad::Index j = 0; j < m.cols(); ++j) {
        m(i, j) = get_f64(bytes, at);
        at += 8;
      }
  }
  if (at != bytes.size()) throw ValidationError("trailing bytes after weights");
  return model;
}

PernnModel deserialize(const std::string& bytes, const PhysicsFactory& factory) {
  try {
    return deserialize_unchecked(bytes, factory);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed model header: ") + e.what());
  }
}

void save_model(const PernnModel& model, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot write model file '" + path + "'");
  const std::string bytes = serialize(model);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw ValidationError("failed writing model file '" + path + "'");
}

PernnModel load_model(const std::string& path, const PhysicsFactory& factory) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot read model file '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return deserialize(ss.str(), factory);
}

}  // namespace pernn::blocks

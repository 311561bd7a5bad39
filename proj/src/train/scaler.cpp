#include "pernn/train/scaler.hpp"

#include <cmath>

#include "pernn/errors.hpp"

namespace pernn::train {

FeatureScaler FeatureScaler::fit(const ad::Matrix& x) {
  if (x.rows() < 1) throw ValidationError("cannot fit a scaler on zero rows");
  FeatureScaler s;
  s.mean = x.colwise().mean();
  s.scale.resize(1, x.cols());
  for (ad::Index j = 0; j < x.cols(); ++j) {
    const double var = (x.col(j).array() - s.mean(0, j)).square().mean();
    const double sd = std::sqrt(var);
    s.scale(0, j) = sd > 1e-12 ? sd : 1.0;
  }
  s.lo = x.colwise().minCoeff();
  s.hi = x.colwise().maxCoeff();
  return s;
}

ad::Matrix FeatureScaler::transform(const ad::Matrix& x) const {
  if (x.cols() != width()) {
    throw ValidationError("feature width " + std::to_string(x.cols()) + " does not match scaler width " +
                          std::to_string(width()));
  }
  ad::Matrix out(x.rows(), x.cols());
  for (ad::Index i = 0; i < x.rows(); ++i)
    for (ad::Index j = 0; j < x.cols(); ++j)
      out(i, j) = (std::clamp(x(i, j), lo(0, j), hi(0, j)) - mean(0, j)) / scale(0, j);
  return out;
}

namespace {

std::vector<double> row(const ad::Matrix& m) { return {m.data(), m.data() + m.size()}; }

ad::Matrix from_row(const std::vector<double>& v) {
  ad::Matrix m(1, static_cast<ad::Index>(v.size()));
  for (std::size_t k = 0; k < v.size(); ++k) m(0, static_cast<ad::Index>(k)) = v[k];
  return m;
}

}  // namespace

nlohmann::json FeatureScaler::to_json() const {
  return {{"mean", row(mean)}, {"scale", row(scale)}, {"lo", row(lo)}, {"hi", row(hi)}};
}

FeatureScaler FeatureScaler::from_json(const nlohmann::json& j) {
  try {
    FeatureScaler s;
    s.mean = from_row(j.at("mean").get<std::vector<double>>());
    s.scale = from_row(j.at("scale").get<std::vector<double>>());
    s.lo = from_row(j.at("lo").get<std::vector<double>>());
    s.hi = from_row(j.at("hi").get<std::vector<double>>());
    if (s.scale.cols() != s.mean.cols() || s.lo.cols() != s.mean.cols() || s.hi.cols() != s.mean.cols()) {
      throw ValidationError("scaler fields differ in width");
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed scaler: ") + e.what());
  }
}

}  // namespace pernn::train

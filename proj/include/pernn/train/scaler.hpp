#pragma once

#include "json.hpp"
#include "pernn/autodiff/tape.hpp"

namespace pernn::train {

// Per-column standardisation fitted on training rows. Inputs are clamped to
// the training range before scaling so unseen extremes stay in-distribution.
struct FeatureScaler {
  ad::Matrix mean;  // 1 x d
  ad::Matrix scale;  // 1 x d, std or 1 for constant columns
  ad::Matrix lo;    // 1 x d
  ad::Matrix hi;    // 1 x d

  static FeatureScaler fit(const ad::Matrix& x);
  ad::Matrix transform(const ad::Matrix& x) const;
  ad::Index width() const { return mean.cols(); }

  nlohmann::json to_json() const;
  static FeatureScaler from_json(const nlohmann::json& j);
};

}  // namespace pernn::train

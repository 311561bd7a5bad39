#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "pernn/errors.hpp"
#include "pernn/nee/models.hpp"
#include "pernn/steering/models.hpp"
#include "pernn/train/trainer.hpp"

using namespace pernn;
using namespace pernn::train;

namespace {

std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 2.0);
  std::vector<double> v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

ad::Matrix random_rows(ad::Index n, ad::Index d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  ad::Matrix m(n, d);
  for (ad::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

// Steering-shaped data with constant intermediate labels.
Dataset constant_label_data(ad::Index n, double l, double theta) {
  Dataset d;
  d.x = random_rows(n, steering::kFeatureCount, 1);
  d.intermediates.resize(n, 2);
  d.intermediates.col(0).setConstant(l);
  d.intermediates.col(1).setConstant(theta);
  d.target = ad::Matrix::Zero(n, 1);
  return d;
}

std::map<std::string, ad::Matrix> snapshot(const blocks::PernnModel& m, bool physics_only) {
  std::map<std::string, ad::Matrix> s;
  for (const auto& p : m.tape().parameters()) {
    const auto& name = m.tape().node(p).name;
    if (physics_only && name.rfind("phys/", 0) != 0) continue;
    s[name] = m.tape().parameter_value(p);
  }
  return s;
}

}  // namespace

TEST(Adam, ZeroGradientKeepsParametersAndDecaysMoments) {
  ad::Tape t;
  const auto p = t.parameter("w", ad::Matrix::Constant(2, 2, 0.5));
  TrainConfig cfg;
  AdamState st;
  ad::GradientMap g;
  g.set(p, ad::Matrix::Constant(2, 2, 1.0));
  adam_step(t, g, st, cfg);
  const ad::Matrix w1 = t.parameter_value(p);
  const ad::Matrix m1 = st.m.at(p.index), v1 = st.v.at(p.index);
  g.set(p, ad::Matrix::Zero(2, 2));
  adam_step(t, g, st, cfg);
  EXPECT_EQ(st.step, 2u);
  EXPECT_LE((st.m.at(p.index) - cfg.beta1 * m1).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LE((st.v.at(p.index) - cfg.beta2 * v1).cwiseAbs().maxCoeff(), 1e-15);
  // Decayed moments still move the parameter; a fresh state with zero gradient does not.
  AdamState fresh;
  ad::Tape u;
  const auto q = u.parameter("w", ad::Matrix::Constant(2, 2, 0.5));
  ad::GradientMap z;
  z.set(q, ad::Matrix::Zero(2, 2));
  adam_step(u, z, fresh, cfg);
  EXPECT_EQ(u.parameter_value(q), ad::Matrix::Constant(2, 2, 0.5));
  EXPECT_NE(w1, ad::Matrix::Constant(2, 2, 0.5));
}

TEST(Adam, ConstantGradientStepApproachesLearningRate) {
  ad::Tape t;
  const auto p = t.parameter("w", ad::Matrix::Zero(1, 3));
  TrainConfig cfg;
  cfg.learning_rate = 0.01;
  AdamState st;
  ad::GradientMap g;
  ad::Matrix grad(1, 3);
  grad << 0.3, -2.0, 5.0;
  double prev[3] = {0, 0, 0};
  for (int k = 1; k <= 500; ++k) {
    g.set(p, grad);
    adam_step(t, g, st, cfg);
    for (int j = 0; j < 3; ++j) {
      const double step = t.parameter_value(p)(0, j) - prev[j];
      prev[j] = t.parameter_value(p)(0, j);
      // m_hat = g and v_hat = g^2 exactly, so each step is lr * g / (|g| + eps).
      const double expected = -cfg.learning_rate * grad(0, j) / (std::abs(grad(0, j)) + cfg.epsilon);
      EXPECT_NEAR(step, expected, 1e-12 + 1e-9 * cfg.learning_rate);
    }
  }
  EXPECT_EQ(st.step, 500u);
}

TEST(Adam, NonFiniteGradientAbortsWithoutUpdate) {
  ad::Tape t;
  const auto a = t.parameter("layer/a", ad::Matrix::Constant(1, 2, 1.0));
  const auto b = t.parameter("layer/b", ad::Matrix::Constant(1, 2, 1.0));
  ad::GradientMap g;
  g.set(a, ad::Matrix::Constant(1, 2, 1.0));
  ad::Matrix bad = ad::Matrix::Constant(1, 2, 1.0);
  bad(0, 1) = std::numeric_limits<double>::quiet_NaN();
  g.set(b, bad);
  AdamState st;
  try {
    adam_step(t, g, st, TrainConfig{});
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("layer/b"), std::string::npos);
  }
  EXPECT_EQ(t.parameter_value(a), ad::Matrix::Constant(1, 2, 1.0));
  EXPECT_EQ(st.step, 0u);
}

TEST(Adam, ClipGlobalNorm) {
  ad::Tape t;
  const auto a = t.parameter("a", ad::Matrix::Zero(1, 2));
  ad::GradientMap g;
  ad::Matrix v(1, 2);
  v << 3.0, 4.0;
  g.set(a, v);
  EXPECT_EQ(clip_global_norm(g, 1.0), 5.0);
  EXPECT_NEAR(std::sqrt(g.squared_norm()), 1.0, 1e-15);
}

TEST(Config, Validation) {
  TrainConfig c;
  c.batch_size = 0;
  EXPECT_THROW(validate(c), ValidationError);
  c = {};
  c.beta1 = 1.0;
  EXPECT_THROW(validate(c), ValidationError);
  c = {};
  c.loss_threshold = 0.0;
  EXPECT_THROW(validate(c), ValidationError);
  c = {};
  c.loss_threshold = std::numeric_limits<double>::infinity();
  EXPECT_NO_THROW(validate(c));
}

TEST(Losses, Examples) {
  const std::vector<double> a{1.0, -2.0, 3.0};
  EXPECT_EQ(mse_loss(a, a), 0.0);
  EXPECT_EQ(mae_loss(a, a), 0.0);
  EXPECT_EQ(mse_loss(std::vector<double>{0, 0}, std::vector<double>{1, 1}), 1.0);
  EXPECT_EQ(mae_loss(std::vector<double>{0}, std::vector<double>{-2}), 2.0);
  EXPECT_THROW(mse_loss(std::vector<double>{}, std::vector<double>{}), ValidationError);
  EXPECT_THROW(mae_loss(std::vector<double>{1}, std::vector<double>{1, 2}), ValidationError);
  EXPECT_THROW(pinn_loss(a, a, a, std::vector<double>{1, 0}), ValidationError);
}

TEST(Losses, LoopOracles) {
  std::mt19937_64 rng(7);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = 1 + rng() % 50;
    const auto p = random_vector(n, rng), y = random_vector(n, rng), f = random_vector(n, rng);
    std::vector<double> mask(n);
    for (auto& m : mask) m = static_cast<double>(rng() % 2);
    double se = 0, ae = 0, pe = 0;
    std::size_t masked = 0;
    for (std::size_t i = 0; i < n; ++i) {
      se += (p[i] - y[i]) * (p[i] - y[i]);
      ae += std::abs(p[i] - y[i]);
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (mask[i] == 0.0) continue;
      pe += (p[i] - f[i]) * (p[i] - f[i]);
      ++masked;
    }
    const double mse = se / static_cast<double>(n);
    EXPECT_NEAR(mse_loss(p, y), mse, 1e-12);
    EXPECT_NEAR(mae_loss(p, y), ae / static_cast<double>(n), 1e-12);
    const double phy = masked ? pe / static_cast<double>(masked) : 0.0;
    EXPECT_NEAR(pinn_loss(p, y, f, mask), mse + phy, 1e-12);
  }
}

TEST(Losses, PinnMaskCases) {
  std::mt19937_64 rng(8);
  const auto p = random_vector(10, rng), y = random_vector(10, rng), f = random_vector(10, rng);
  EXPECT_EQ(pinn_loss(p, y, f, std::vector<double>(10, 0.0)), mse_loss(p, y));
  EXPECT_EQ(pinn_loss(p, y, p, std::vector<double>(10, 1.0)), mse_loss(p, y));
}

TEST(Phase1, ConstantLabelsAreLearned) {
  auto m = steering::make_steering_model(blocks::Variant::penn, 3);
  const auto d = constant_label_data(256, 40.0, 0.3);
  TrainConfig cfg;
  cfg.max_epochs = 1000;
  cfg.batch_size = 32;
  cfg.seed = 4;
  const auto r = train_phase1(m, d, cfg, Objective::intermediates_mse);
  ASSERT_FALSE(r.diverged);
  const auto p = m.predict({{std::string(blocks::kFeatureInput), d.x}});
  for (ad::Index i = 0; i < p.intermediates.rows(); ++i) {
    EXPECT_NEAR(p.intermediates(i, 0), 40.0, 0.05 * 40.0);
    EXPECT_NEAR(p.intermediates(i, 1), 0.3, 0.05 * 0.3);
  }
  EXPECT_TRUE(m.metadata.value(kPhase1DoneKey, false));
}

TEST(Phase1, ZeroEpochsLeaveWeights) {
  auto m = steering::make_steering_model(blocks::Variant::penn, 3);
  const auto before = snapshot(m, false);
  TrainConfig cfg;
  cfg.max_epochs = 0;
  const auto r = train_phase1(m, constant_label_data(32, 40.0, 0.3), cfg, Objective::intermediates_mae);
  EXPECT_TRUE(r.history.empty());
  EXPECT_EQ(snapshot(m, false), before);
}

TEST(Phase1, EqualSeedsGiveIdenticalHistories) {
  const auto d = constant_label_data(64, 40.0, 0.3);
  TrainConfig cfg;
  cfg.max_epochs = 5;
  cfg.seed = 9;
  auto a = steering::make_steering_model(blocks::Variant::pernn, 3);
  auto b = steering::make_steering_model(blocks::Variant::pernn, 3);
  const auto ra = train_phase1(a, d, cfg, Objective::intermediates_mae);
  const auto rb = train_phase1(b, d, cfg, Objective::intermediates_mae);
  ASSERT_EQ(ra.history.size(), rb.history.size());
  for (std::size_t i = 0; i < ra.history.size(); ++i) EXPECT_EQ(ra.history[i].loss, rb.history[i].loss);
  EXPECT_EQ(blocks::serialize(a), blocks::serialize(b));
}

TEST(Phase1, RejectsTargetObjective) {
  auto m = steering::make_steering_model(blocks::Variant::penn, 3);
  EXPECT_THROW(train_phase1(m, constant_label_data(8, 40.0, 0.3), TrainConfig{}, Objective::target_mse),
               ValidationError);
}

TEST(Phase2, RequiresPhase1ForPhysicsVariants) {
  auto m = steering::make_steering_model(blocks::Variant::pernn, 3);
  EXPECT_THROW(train_phase2(m, constant_label_data(8, 40.0, 0.3), TrainConfig{}, Objective::target_mse),
               ValidationError);
  auto f = steering::make_steering_model(blocks::Variant::fcnn, 3);
  TrainConfig cfg;
  cfg.max_epochs = 1;
  EXPECT_NO_THROW(train_phase2(f, constant_label_data(8, 40.0, 0.3), cfg, Objective::target_mse));
}

TEST(Phase2, InfiniteThresholdStopsAfterOneEpoch) {
  auto m = steering::make_steering_model(blocks::Variant::pernn, 3);
  m.metadata[kPhase1DoneKey] = true;
  TrainConfig cfg;
  cfg.max_epochs = 50;
  cfg.loss_threshold = std::numeric_limits<double>::infinity();
  const auto r = train_phase2(m, constant_label_data(64, 40.0, 0.3), cfg, Objective::target_mse);
  EXPECT_EQ(r.history.size(), 1u);
  EXPECT_EQ(r.history[0].phase, "phase2");
}

TEST(Phase2, PhysicsConstantsUntouchedAndDeterministic) {
  const auto d = constant_label_data(64, 40.0, 0.3);
  TrainConfig cfg;
  cfg.max_epochs = 4;
  cfg.seed = 5;
  cfg.learning_rate = 1e-2;
  auto a = steering::make_steering_model(blocks::Variant::pernn, 3);
  auto b = steering::make_steering_model(blocks::Variant::pernn, 3);
  const auto phys = snapshot(a, true);
  ASSERT_FALSE(phys.empty());
  for (auto* m : {&a, &b}) {
    train_phase1(*m, d, cfg, Objective::intermediates_mae);
    train_phase2(*m, d, cfg, Objective::target_mse);
  }
  EXPECT_EQ(snapshot(a, true), phys);
  EXPECT_EQ(blocks::serialize(a), blocks::serialize(b));
}

TEST(Pinn, ObjectiveMatchesLossFunction) {
  auto m = steering::make_steering_model(blocks::Variant::pinn, 3);
  Dataset d = constant_label_data(40, 40.0, 0.3);
  d.target = random_rows(40, 1, 2);
  d.physics_pred = random_rows(40, 1, 3);
  d.mask = ad::Matrix::Zero(40, 1);
  for (ad::Index i = 0; i < 40; i += 3) d.mask(i, 0) = 1.0;
  const auto p = m.predict({{std::string(blocks::kFeatureInput), d.x}});
  const std::vector<double> pred(p.target.data(), p.target.data() + 40);
  const std::vector<double> y(d.target.data(), d.target.data() + 40);
  const std::vector<double> f(d.physics_pred.data(), d.physics_pred.data() + 40);
  const std::vector<double> mask(d.mask.data(), d.mask.data() + 40);
  EXPECT_NEAR(evaluate_objective(m, d, Objective::pinn), pinn_loss(pred, y, f, mask), 1e-12);
  d.mask.setZero();
  EXPECT_NEAR(evaluate_objective(m, d, Objective::pinn), mse_loss(pred, y), 1e-12);
}

TEST(Dataset, TakeSelectsRows) {
  Dataset d = constant_label_data(10, 40.0, 0.3);
  d.raw["extra"] = random_rows(10, 1, 4);
  const std::vector<ad::Index> rows{7, 2};
  const auto s = d.take(rows);
  ASSERT_EQ(s.rows(), 2);
  EXPECT_EQ(s.x.row(0), d.x.row(7));
  EXPECT_EQ(s.raw.at("extra")(1, 0), d.raw.at("extra")(2, 0));
}

TEST(Scaler, StandardisesAndClamps) {
  ad::Matrix x(4, 2);
  x << 1, 5, 2, 5, 3, 5, 4, 5;
  const auto s = FeatureScaler::fit(x);
  const auto z = s.transform(x);
  EXPECT_NEAR(z.col(0).mean(), 0.0, 1e-15);
  EXPECT_EQ(z.col(1), ad::Matrix::Zero(4, 1));
  ad::Matrix far(1, 2);
  far << 100, 5;
  EXPECT_EQ(s.transform(far)(0, 0), z(3, 0));
  const auto back = FeatureScaler::from_json(s.to_json());
  EXPECT_EQ(back.transform(x), z);
}

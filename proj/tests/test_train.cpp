#include <gtest/gtest.h>

#include <cmath>

#include "saros/train.hpp"
#include "synthetic.hpp"

using namespace saros;
using saros::testing::Event;
using saros::testing::kNeg;
using saros::testing::kPos;
using saros::testing::make_dataset;

namespace {

TrainConfig small_config() {
  TrainConfig c;
  c.k = 4;
  c.eta = 0.1;
  c.alpha = 0.1;
  c.lambda = 0.01;
  c.init_scale = 0.3;
  c.rng_seed = 5;
  return c;
}

// User with `n` blocks (-,+) over fresh items starting at `first_item`.
std::vector<Event> alternating(std::size_t n, std::uint32_t first_item = 0) {
  std::vector<Event> ev;
  for (std::uint32_t t = 0; t < n; ++t) {
    ev.push_back({first_item + 2 * t, kNeg});
    ev.push_back({first_item + 2 * t + 1, kPos});
  }
  return ev;
}

Dataset small_planted() {
  saros::testing::PlantedSpec spec;
  spec.n_users = 20;
  spec.n_items = 30;
  spec.k = 3;
  spec.per_user = 20;
  spec.flip = 0.1;
  return saros::testing::planted_dataset(spec);
}

}  // namespace

TEST(SarosB, UserBelowLowerThresholdIsRolledBack) {
  const auto ds = make_dataset({alternating(1), alternating(3, 2)}, 8);
  auto c = small_config();
  c.b = 2;
  const auto start = init_params(ds.n_users(), ds.n_items(), c, c.rng_seed);
  TrainOptions o;
  o.initial = start;
  const auto r = train_saros_b(ds, c, o);
  // user 0 (1 block) undone; user 1 has 3 blocks > b and keeps its updates
  EXPECT_EQ(r.params.users.row(0), start.users.row(0));
  for (Eigen::Index i = 0; i < 2; ++i) EXPECT_EQ(r.params.items.row(i), start.items.row(i));
  EXPECT_NE(r.params.users.row(1), start.users.row(1));
  EXPECT_EQ(r.rolled_back_users, 1u);
  EXPECT_EQ(r.updates, 4u);
}

TEST(SarosB, RollbackRestoresSnapshotBitwise) {
  const auto ds = small_planted();
  auto c = small_config();
  c.b = 1000;  // every user rolled back
  c.B = 2000;
  c.epochs = 2;
  const auto r = train_saros_b(ds, c);
  EXPECT_EQ(r.params, init_params(ds.n_users(), ds.n_items(), c, c.rng_seed));
  EXPECT_GT(r.updates, 0u);
}

TEST(SarosB, UpperThresholdCapsUpdates) {
  const auto ds = make_dataset({alternating(10)}, 20);
  auto c = small_config();
  c.B = 3;
  const auto start = init_params(ds.n_users(), ds.n_items(), c, c.rng_seed);
  TrainOptions o;
  o.initial = start;
  const auto r = train_saros_b(ds, c, o);
  // while t <= B admits blocks 0..B
  EXPECT_EQ(r.updates, 4u);
  for (Eigen::Index i = 0; i < 8; ++i) EXPECT_NE(r.params.items.row(i), start.items.row(i));
  for (Eigen::Index i = 8; i < 20; ++i) EXPECT_EQ(r.params.items.row(i), start.items.row(i));
}

TEST(SarosB, ZeroStepFreezesParams) {
  const auto ds = small_planted();
  auto c = small_config();
  c.eta = 0.0;
  c.trace_period = 50;
  const auto r = train_saros_b(ds, c);
  EXPECT_EQ(r.params, init_params(ds.n_users(), ds.n_items(), c, c.rng_seed));
  ASSERT_GE(r.trace.points.size(), 2u);
  for (const auto& pt : r.trace.points) EXPECT_EQ(pt.loss, r.trace.points.front().loss);
}

TEST(SarosB, InvSqrtPolicyScalesStep) {
  const auto ds = small_planted();
  auto c = small_config();
  c.epochs = 3;
  c.step_policy = StepPolicy::inv_sqrt_n;
  auto d = c;
  d.step_policy = StepPolicy::constant;
  d.eta = c.eta / std::sqrt(static_cast<double>(ds.n_users()) * 3.0);
  EXPECT_EQ(train_saros_b(ds, c).params, train_saros_b(ds, d).params);
}

TEST(SarosB, NonFiniteStepRaises) {
  const auto ds = small_planted();
  auto c = small_config();
  c.eta = 1e300;
  c.lambda = 1.0;
  c.epochs = 5;
  EXPECT_THROW(train_saros_b(ds, c), NumericError);
}

class Locality : public ::testing::TestWithParam<TrainerKind> {};

TEST_P(Locality, BlockTouchesOnlyItsRows) {
  // Only user 0 forms a block (items 0, 1); the other users never do.
  const auto ds = make_dataset({{{0, kNeg}, {1, kPos}}, {{2, kPos}, {3, kNeg}}, {{4, kPos}}}, 5);
  const auto c = small_config();
  const auto start = init_params(ds.n_users(), ds.n_items(), c, c.rng_seed);
  TrainOptions o;
  o.initial = start;
  const auto r = train(GetParam(), ds, c, o);
  EXPECT_EQ(r.updates, 1u);
  EXPECT_NE(r.params.users.row(0), start.users.row(0));
  for (Eigen::Index u = 1; u < 3; ++u) EXPECT_EQ(r.params.users.row(u), start.users.row(u));
  for (Eigen::Index i = 2; i < 5; ++i) EXPECT_EQ(r.params.items.row(i), start.items.row(i));
}

INSTANTIATE_TEST_SUITE_P(Saros, Locality, ::testing::Values(TrainerKind::saros_b, TrainerKind::saros_m));

TEST(SarosM, ZeroMomentumEqualsUngatedSarosB) {
  const auto ds = small_planted();
  auto m = small_config();
  m.mu = 0.0;
  m.alpha = 0.07;
  m.epochs = 3;
  auto b = m;
  b.b = 0;
  b.B = kUnbounded;
  b.eta = 0.07;
  const auto rm = train_saros_m(ds, m);
  const auto rb = train_saros_b(ds, b);
  EXPECT_EQ(rm.params, rb.params);
  EXPECT_EQ(rm.updates, rb.updates);
}

TEST(SarosM, ZeroStepFreezesParams) {
  const auto ds = small_planted();
  auto c = small_config();
  c.alpha = 0.0;
  EXPECT_EQ(train_saros_m(ds, c).params, init_params(ds.n_users(), ds.n_items(), c, c.rng_seed));
}

TEST(SarosM, OneBlockHalfMomentum) {
  const auto ds = make_dataset({{{0, kNeg}, {2, kNeg}, {1, kPos}}}, 3);
  auto c = small_config();
  c.mu = 0.5;
  c.alpha = 0.2;
  const auto start = init_params(ds.n_users(), ds.n_items(), c, c.rng_seed);
  TrainOptions o;
  o.initial = start;
  const auto r = train_saros_m(ds, c, o);
  const auto pl = pairwise_loss_and_grad(start, UserId{0}, std::vector<ItemId>{ItemId{1}},
                                         std::vector<ItemId>{ItemId{0}, ItemId{2}}, c.lambda);
  for (Eigen::Index d = 0; d < 4; ++d) {
    EXPECT_NEAR(r.params.users(0, d), start.users(0, d) - 0.2 * 0.5 * pl.grad.user_grad(d), 1e-15);
    for (std::size_t x = 0; x < pl.grad.items.size(); ++x) {
      const auto row = pl.grad.items[x].value;
      EXPECT_NEAR(r.params.items(row, d),
                  start.items(row, d) - 0.2 * 0.5 * pl.grad.item_grads(static_cast<Eigen::Index>(x), d), 1e-15);
    }
  }
}

TEST(Bpr, ZeroStepsLeaveParams) {
  const auto ds = small_planted();
  const auto c = small_config();
  TrainOptions o;
  o.bpr_steps = 0;
  const auto r = train_bpr(ds, c, o);
  EXPECT_EQ(r.updates, 0u);
  EXPECT_EQ(r.params, init_params(ds.n_users(), ds.n_items(), c, c.rng_seed));
}

TEST(Bpr, SingleTripletDescends) {
  const auto ds = make_dataset({{{0, kNeg}, {1, kPos}}}, 2);
  auto c = small_config();
  c.lambda = 0.0;
  c.eta = 0.05;
  c.trace_period = 1;
  TrainOptions o;
  o.bpr_steps = 50;
  const auto r = train_bpr(ds, c, o);
  ASSERT_EQ(r.trace.points.size(), 51u);
  for (std::size_t t = 1; t < r.trace.points.size(); ++t) {
    EXPECT_LT(r.trace.points[t].loss, r.trace.points[t - 1].loss);
  }
  // each step is the deterministic triplet step
  auto p = init_params(1, 2, c, c.rng_seed);
  for (int s = 0; s < 50; ++s) {
    const auto g = triplet_grad(p, UserId{0}, ItemId{1}, ItemId{0}, 0.0);
    p.users.row(0) -= c.eta * g.user.transpose();
    p.items.row(1) -= c.eta * g.item_pos.transpose();
    p.items.row(0) -= c.eta * g.item_neg.transpose();
  }
  EXPECT_EQ(r.params, p);
}

TEST(Bpr, DefaultStepsAreEpochsTimesInteractions) {
  const auto ds = make_dataset({{{0, kNeg}, {1, kPos}, {2, kPos}}, {{0, kPos}}}, 3);
  auto c = small_config();
  c.epochs = 4;
  EXPECT_EQ(train_bpr(ds, c).updates, 12u);
}

TEST(Bpr, Deterministic) {
  const auto ds = small_planted();
  auto c = small_config();
  c.epochs = 2;
  c.trace_period = 100;
  const auto a = train_bpr(ds, c);
  const auto b = train_bpr(ds, c);
  EXPECT_EQ(a.params, b.params);
  ASSERT_EQ(a.trace.points.size(), b.trace.points.size());
  for (std::size_t t = 0; t < a.trace.points.size(); ++t) {
    EXPECT_EQ(a.trace.points[t].loss, b.trace.points[t].loss);
    EXPECT_EQ(a.trace.points[t].updates, b.trace.points[t].updates);
  }
  c.rng_seed = 6;
  EXPECT_NE(train_bpr(ds, c).params, a.params);
}

TEST(BprBatch, OnePairIsOneTripletStep) {
  const auto ds = make_dataset({{{0, kNeg}, {1, kPos}}}, 2);
  const auto c = small_config();
  const auto start = init_params(1, 2, c, c.rng_seed);
  const auto r = train_bpr_batch(ds, c);
  const auto g = triplet_grad(start, UserId{0}, ItemId{1}, ItemId{0}, c.lambda);
  for (Eigen::Index d = 0; d < 4; ++d) {
    EXPECT_NEAR(r.params.users(0, d), start.users(0, d) - c.eta * g.user(d), 1e-15);
    EXPECT_NEAR(r.params.items(1, d), start.items(1, d) - c.eta * g.item_pos(d), 1e-15);
    EXPECT_NEAR(r.params.items(0, d), start.items(0, d) - c.eta * g.item_neg(d), 1e-15);
  }
}

TEST(BprBatch, LossNonIncreasing) {
  const auto ds = small_planted();
  auto c = small_config();
  c.lambda = 0.0;
  c.eta = 0.5;
  c.epochs = 100;
  c.trace_period = 1;
  const auto r = train_bpr_batch(ds, c);
  ASSERT_EQ(r.trace.points.size(), 101u);
  for (std::size_t t = 1; t < r.trace.points.size(); ++t) {
    EXPECT_LE(r.trace.points[t].loss, r.trace.points[t - 1].loss);
  }
  EXPECT_LT(r.trace.points.back().loss, r.trace.points.front().loss);
}

TEST(Trace, PeriodBeyondUpdatesGivesStartAndEnd) {
  const auto ds = small_planted();
  auto c = small_config();
  c.trace_period = 1000000;
  for (auto kind : {TrainerKind::saros_b, TrainerKind::saros_m, TrainerKind::bpr, TrainerKind::bpr_batch}) {
    const auto r = train(kind, ds, c);
    ASSERT_EQ(r.trace.points.size(), 2u) << to_string(kind);
    EXPECT_EQ(r.trace.points.front().updates, 0u);
    EXPECT_EQ(r.trace.points.back().updates, r.updates);
    EXPECT_EQ(r.trace.trainer, kind);
    EXPECT_EQ(r.trace.config_hash, config_hash(c));
  }
}

TEST(Trace, ExhaustiveSampleIsDatasetLoss) {
  const auto ds = small_planted();
  auto c = small_config();
  TraceSampler s(ds, c, TrainerKind::saros_b, false);
  ASSERT_TRUE(s.exhaustive());
  const auto p = init_params(ds.n_users(), ds.n_items(), c, 3);
  EXPECT_NEAR(s.loss(p), dataset_loss(p, ds, Split::train, c.lambda).loss, 1e-14);
}

TEST(Trace, SubsampleIsSeededAndClose) {
  const auto ds = small_planted();
  auto c = small_config();
  const auto p = init_params(ds.n_users(), ds.n_items(), c, 3);
  c.trace_pairs = 400;
  TraceSampler a(ds, c, TrainerKind::bpr, false), b(ds, c, TrainerKind::bpr, false);
  ASSERT_FALSE(a.exhaustive());
  EXPECT_EQ(a.loss(p), b.loss(p));
  EXPECT_NEAR(a.loss(p), dataset_loss(p, ds, Split::train, c.lambda).loss, 0.05);
}

TEST(Trace, GradientNormTrackedOnRequest) {
  const auto ds = small_planted();
  auto c = small_config();
  TrainOptions o;
  o.track_grad_norm = true;
  const auto r = train_saros_b(ds, c, o);
  const auto users = eligible_users(ds, Split::train);
  EXPECT_NEAR(r.trace.points.back().grad_sq_norm, dataset_loss_and_grad(r.params, users, c.lambda).squared_norm(),
              1e-12);
  EXPECT_TRUE(std::isnan(train_saros_b(ds, c).trace.points.back().grad_sq_norm));
}

TEST(Train, MismatchedInitialParamsRejected) {
  const auto ds = small_planted();
  const auto c = small_config();
  TrainOptions o;
  o.initial = init_params(2, 2, c, 1);
  EXPECT_THROW(train_saros_b(ds, c, o), ConfigError);
}

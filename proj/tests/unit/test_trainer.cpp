#include <gtest/gtest.h>

#include <cmath>

#include "posendf/error.hpp"
#include "posendf/trainer.hpp"
#include "support.hpp"

using namespace posendf;

namespace {

// Small labeled set around a synthetic manifold; labels are exact nearest
// distances so every tier is populated.
PoseDataset tiny_dataset(std::size_t k, std::uint64_t seed, std::size_t n_manifold = 300, std::size_t per_sigma = 100) {
  const auto spec = SyntheticManifoldSpec::random(k, 2, seed);
  PoseDataset ds;
  ds.skeleton = SkeletonTopology::binary_tree(k);
  Rng rng(seed);
  const auto m = sample_manifold(spec, n_manifold, rng);
  const std::vector<double> sigmas{0.8, 0.4, 0.15};
  const auto neg = build_negatives(m, sigmas, per_sigma, rng);
  for (const auto& p : m) ds.samples.push_back({p, 0.0, Tier::manifold});
  const KnnLabeler labeler(m, ds.skeleton);
  for (const auto& n : neg) ds.samples.push_back({n.pose, labeler.label(n.pose, 50, 5), n.tier});
  ds.refresh_counts();
  return ds;
}

TrainingConfig short_config(std::size_t epochs_per_stage) {
  TrainingConfig cfg;
  for (auto& s : cfg.stages) s.epochs = epochs_per_stage;
  cfg.batch_size = 32;
  cfg.batches_per_epoch = 4;
  cfg.seed = 5;
  return cfg;
}

}  // namespace

TEST(Adam, ZeroGradientFreshState) {
  std::vector<double> p{1.0, -2.0, 3.0};
  const std::vector<double> g(3, 0.0);
  AdamState st;
  adam_step(p, g, st, 0.1, 0.9, 0.999, 1e-8, 1);
  EXPECT_EQ(p, (std::vector<double>{1.0, -2.0, 3.0}));
}

TEST(Adam, FirstStepHandValue) {
  std::vector<double> p{0.0};
  const std::vector<double> g{1.0};
  AdamState st;
  adam_step(p, g, st, 0.1, 0.9, 0.999, 1e-8, 1);
  // m_hat = 1, v_hat = 1: the step is lr / (1 + eps).
  EXPECT_DOUBLE_EQ(p[0], -0.1 / (1.0 + 1e-8));
}

TEST(Adam, Deterministic) {
  std::vector<double> p1{0.5, 0.25}, p2 = p1;
  const std::vector<double> g{0.3, -0.7};
  AdamState s1, s2;
  for (std::uint64_t t = 1; t <= 5; ++t) {
    adam_step(p1, g, s1, 0.01, 0.9, 0.999, 1e-8, t);
    adam_step(p2, g, s2, 0.01, 0.9, 0.999, 1e-8, t);
  }
  EXPECT_EQ(p1, p2);
}

TEST(AugmentFlip, ProbabilityExtremes) {
  Rng rng(1);
  const auto skel = SkeletonTopology::binary_tree(4);
  std::vector<LabeledPose> batch;
  for (int i = 0; i < 5; ++i) batch.push_back({random_pose(4, rng), 0.1 * (i + 1), Tier::far});
  EXPECT_EQ(augment_flip(batch, 0.0, rng), batch);
  const auto flipped = augment_flip(batch, 1.0, rng);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    EXPECT_EQ(flipped[i].pose, batch[i].pose.flipped());
    EXPECT_EQ(pose_distance(flipped[i].pose, batch[i].pose, skel), 0.0);
    EXPECT_EQ(flipped[i].distance, batch[i].distance);
    EXPECT_EQ(flipped[i].tier, batch[i].tier);
  }
}

TEST(SampleBatch, LargestRemainderCounts) {
  std::array<std::vector<std::size_t>, 4> pools{
      std::vector<std::size_t>{0, 1}, std::vector<std::size_t>{2, 3}, std::vector<std::size_t>{4},
      std::vector<std::size_t>{5, 6, 7}};
  Rng rng(2);
  const auto idx = sample_batch(pools, {0.3, 0.3, 0.2, 0.2}, 256, rng);
  ASSERT_EQ(idx.size(), 256u);
  std::array<std::size_t, 4> counts{};
  for (std::size_t i : idx) counts[i < 2 ? 0 : i < 4 ? 1 : i < 5 ? 2 : 3] += 1;
  // 76.8, 76.8, 51.2, 51.2: the two .8 remainders receive the spare slots.
  EXPECT_EQ(counts, (std::array<std::size_t, 4>{77, 77, 51, 51}));
}

TEST(SplitHoldout, PartitionsIndices) {
  const auto [tr, val] = split_holdout(100, 0.05, 3);
  EXPECT_EQ(val.size(), 5u);
  EXPECT_EQ(tr.size(), 95u);
  std::vector<std::size_t> all(tr);
  all.insert(all.end(), val.begin(), val.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(all[i], i);
}

TEST(TrainingConfig, JsonRoundTripAndDefaults) {
  TrainingConfig cfg;
  cfg.learning_rate = 3e-4;
  cfg.stages[1].epochs = 7;
  const auto back = training_config_from_json(training_config_to_json(cfg));
  EXPECT_EQ(training_config_to_json(back), training_config_to_json(cfg));
  const auto defaults = training_config_from_json("{}");
  EXPECT_EQ(defaults.batch_size, 256u);
  EXPECT_EQ(defaults.learning_rate, 1e-4);
  ASSERT_EQ(defaults.stages.size(), 3u);
  EXPECT_EQ(defaults.stages[2].epochs, 40u);
  EXPECT_THROW(training_config_from_json(R"({"batch_size": 0})"), ConfigError);
}

TEST(Train, ZeroEpochsLeavesModelUnchanged) {
  const auto ds = tiny_dataset(3, 1, 60, 20);
  const FieldModel m = test::small_model(3, 1);
  const TrainResult r = train(m, ds, short_config(0));
  EXPECT_EQ(r.model, m);
  EXPECT_TRUE(r.history.epochs.empty());
}

TEST(Train, BitIdenticalUnderFixedSeed) {
  const auto ds = tiny_dataset(3, 2, 60, 20);
  const FieldModel m = test::small_model(3, 2);
  const TrainResult a = train(m, ds, short_config(1));
  const TrainResult b = train(m, ds, short_config(1));
  EXPECT_EQ(a.model, b.model);
  EXPECT_EQ(a.history.to_csv(), b.history.to_csv());
  EXPECT_NE(a.model, m);
}

TEST(Train, CurriculumOrderRespected) {
  const auto ds = tiny_dataset(3, 3, 60, 20);
  const TrainResult r = train(test::small_model(3, 3), ds, short_config(2));
  ASSERT_EQ(r.history.epochs.size(), 6u);
  for (const auto& e : r.history.epochs) {
    const auto near = e.tier_counts[static_cast<std::size_t>(Tier::near)];
    const auto mid = e.tier_counts[static_cast<std::size_t>(Tier::mid)];
    if (e.stage < 2) EXPECT_EQ(near, 0u);
    if (e.stage == 0) EXPECT_EQ(mid, 0u);
    if (e.stage == 2) EXPECT_GT(near, 0u);
  }
  const std::string csv = r.history.to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "epoch,stage,l_udf,l_eik,val_manifold_mean_f,val_negative_mae,val_eikonal_mean_dev,val_flip_asymmetry");
}

TEST(Train, MissingTierIsConfigError) {
  PoseDataset ds;
  ds.skeleton = SkeletonTopology::binary_tree(3);
  Rng rng(4);
  for (int i = 0; i < 20; ++i) ds.samples.push_back({random_pose(3, rng), 0.0, Tier::manifold});
  ds.refresh_counts();
  EXPECT_THROW(train(test::small_model(3, 4), ds, short_config(1)), ConfigError);
}

TEST(Train, DivergenceReportsLastFiniteModel) {
  const auto ds = tiny_dataset(3, 5, 60, 20);
  TrainingConfig cfg = short_config(1);
  cfg.learning_rate = 1e200;
  try {
    train(test::small_model(3, 5), ds, cfg);
    FAIL() << "expected divergence";
  } catch (const TrainingDiverged& e) {
    for (double p : e.last_good().parameters()) EXPECT_TRUE(std::isfinite(p));
    EXPECT_NO_THROW(forward(e.last_good(), Pose::identity(3)));
  }
}

TEST(Train, SmallLearningRateDoesNotIncreaseLossOnFixedBatch) {
  const auto ds = tiny_dataset(3, 6, 60, 20);
  FieldModel m = test::small_model(3, 6);
  std::vector<LabeledPose> batch(ds.samples.begin(), ds.samples.begin() + 40);
  batch.insert(batch.end(), ds.samples.end() - 40, ds.samples.end());
  auto total = [&](const FieldModel& mm) {
    const auto l = loss_and_param_grads(mm, batch, 0.1);
    return std::pair{l.udf + 0.1 * l.eikonal, l.grads};
  };
  const double initial = total(m).first;
  AdamState st;
  for (std::uint64_t t = 1; t <= 10; ++t) {
    const auto [loss, g] = total(m);
    adam_step(m.parameters(), g, st, 1e-5, 0.9, 0.999, 1e-8, t);
  }
  EXPECT_LE(total(m).first, initial);
}

TEST(Validate, ZeroFieldOnManifoldSamples) {
  FieldModel m = test::small_model(3, 7);
  const std::size_t last = m.head_layer(m.shape().head_layers - 1);
  m.weight(last).setZero();
  m.bias(last)[0] = -20.0;
  Rng rng(7);
  std::vector<LabeledPose> samples;
  for (int i = 0; i < 10; ++i) samples.push_back({random_pose(3, rng), 0.0, Tier::manifold});
  const auto v = validate(m, samples);
  EXPECT_LT(v.manifold_mean_f, 1e-300);
  EXPECT_EQ(v.negative_mae, 0.0);
  EXPECT_EQ(v.flip_asymmetry, 0.0);
}

TEST(Validate, MetricsNonNegative) {
  const auto ds = tiny_dataset(3, 8, 60, 20);
  const auto v = validate(test::small_model(3, 8), ds);
  EXPECT_GE(v.manifold_mean_f, 0.0);
  EXPECT_GE(v.negative_mae, 0.0);
  EXPECT_GE(v.eikonal_mean_dev, 0.0);
  EXPECT_GE(v.flip_asymmetry, 0.0);
}

TEST(Train, FlipAugmentationReducesAsymmetry) {
  const auto ds = tiny_dataset(4, 9, 400, 150);
  const FieldModel init = FieldModel::init(ds.skeleton, {4, 6, 32, 64, 5}, 9);
  TrainingConfig cfg = short_config(4);
  cfg.batch_size = 64;
  cfg.batches_per_epoch = 20;
  cfg.learning_rate = 1e-3;
  cfg.flip_prob = 0.0;
  const double without = validate(train(init, ds, cfg).model, ds).flip_asymmetry;
  cfg.flip_prob = 0.5;
  const double with = validate(train(init, ds, cfg).model, ds).flip_asymmetry;
  EXPECT_LT(with, 0.1 * without);
}

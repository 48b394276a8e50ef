#include <gtest/gtest.h>

#include <cmath>

#include "posendf/error.hpp"
#include "posendf/field_model.hpp"
#include "support.hpp"

using namespace posendf;

namespace {

double softplus_ref(double z) {
  const double bz = kSoftplusBeta * z;
  return (std::max(bz, 0.0) + std::log1p(std::exp(-std::abs(bz)))) / kSoftplusBeta;
}

// Forward pass written layer by layer with plain loops.
double reference_value(const FieldModel& m, const Eigen::VectorXd& x) {
  const std::size_t k = m.num_joints();
  auto layer = [&](std::size_t li, const Eigen::VectorXd& in) {
    const auto w = m.weight(li);
    const auto b = m.bias(li);
    Eigen::VectorXd out(w.rows());
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      double s = b[r];
      for (Eigen::Index c = 0; c < w.cols(); ++c) s += w(r, c) * in[c];
      out[r] = softplus_ref(s);
    }
    return out;
  };
  std::vector<Eigen::VectorXd> feat(k);
  Eigen::VectorXd all(0);
  for (std::size_t j = 0; j < k; ++j) {
    Eigen::VectorXd in = x.segment(static_cast<Eigen::Index>(4 * j), 4);
    if (const auto& p = m.skeleton().parent(j)) {
      Eigen::VectorXd cat(in.size() + feat[*p].size());
      cat << in, feat[*p];
      in = cat;
    }
    feat[j] = layer(m.encoder_layer(j, 1), layer(m.encoder_layer(j, 0), in));
    Eigen::VectorXd grown(all.size() + feat[j].size());
    grown << all, feat[j];
    all = grown;
  }
  for (std::size_t i = 0; i < m.shape().head_layers; ++i) all = layer(m.head_layer(i), all);
  return all[0];
}

FieldModel zero_output_model(std::size_t k, double final_bias) {
  FieldModel m = test::small_model(k, 3);
  const std::size_t last = m.head_layer(m.shape().head_layers - 1);
  m.weight(last).setZero();
  m.bias(last)[0] = final_bias;
  return m;
}

}  // namespace

TEST(FieldModel, LayerLayout) {
  const auto skel = SkeletonTopology::binary_tree(3);
  const FieldModel m = init_model(skel, 6, 256, 1);
  ASSERT_EQ(m.num_layers(), 2u * 3u + 5u);
  EXPECT_EQ(m.layer(m.encoder_layer(0, 0)).in, 4u);
  EXPECT_EQ(m.layer(m.encoder_layer(1, 0)).in, 4u + 6u);
  EXPECT_EQ(m.layer(m.encoder_layer(2, 1)).out, 6u);
  EXPECT_EQ(m.layer(m.head_layer(0)).in, 18u);
  EXPECT_EQ(m.layer(m.head_layer(3)).out, 256u);
  EXPECT_EQ(m.layer(m.head_layer(4)).out, 1u);
  std::size_t expected = 0;
  for (std::size_t i = 0; i < m.num_layers(); ++i) expected += m.layer(i).in * m.layer(i).out + m.layer(i).out;
  EXPECT_EQ(m.num_parameters(), expected);
}

TEST(FieldModel, InitDeterministicAndGlorotBounded) {
  const auto skel = SkeletonTopology::binary_tree(4);
  const FieldModel a = init_model(skel, 6, 32, 9);
  EXPECT_EQ(a, init_model(skel, 6, 32, 9));
  EXPECT_NE(a, init_model(skel, 6, 32, 10));
  for (std::size_t i = 0; i < a.num_layers(); ++i) {
    const double s = std::sqrt(6.0 / static_cast<double>(a.layer(i).in + a.layer(i).out));
    EXPECT_LE(a.weight(i).cwiseAbs().maxCoeff(), s);
    EXPECT_EQ(a.bias(i).cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(FieldModel, MatchesReferenceForwardPass) {
  const FieldModel m = test::small_model(5, 4);
  Rng rng(2);
  for (int i = 0; i < 20; ++i) {
    const Eigen::VectorXd x = random_pose(5, rng).ambient();
    EXPECT_NEAR(field_value(m, x), reference_value(m, x), 1e-14);
  }
}

TEST(FieldModel, BatchEqualsSingle) {
  const FieldModel m = test::small_model(4, 5);
  Rng rng(3);
  std::vector<Pose> poses;
  for (int i = 0; i < 7; ++i) poses.push_back(random_pose(4, rng));
  const EvalTrace t = forward_batch(m, stack_ambient(poses));
  const Eigen::MatrixXd g = input_gradient_batch(m, t);
  for (std::size_t i = 0; i < poses.size(); ++i) {
    // Matrix-matrix and matrix-vector products round differently.
    EXPECT_NEAR(t.values[static_cast<Eigen::Index>(i)], forward(m, poses[i]).value, 1e-15);
    EXPECT_LT((g.col(static_cast<Eigen::Index>(i)) - input_gradient(m, poses[i])).norm(), 1e-15);
  }
}

TEST(FieldModel, ZeroFinalLayerIsConstant) {
  const FieldModel m = zero_output_model(4, 0.03);
  Rng rng(4);
  for (int i = 0; i < 10; ++i) {
    const Pose p = random_pose(4, rng);
    EXPECT_NEAR(forward(m, p).value, softplus_ref(0.03), 1e-15);
    EXPECT_EQ(input_gradient(m, p).norm(), 0.0);
  }
}

TEST(FieldModel, NonNegative) {
  const FieldModel m = init_model(SkeletonTopology::binary_tree(6), 6, 64, 7);
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const double v = forward(m, random_pose(6, rng)).value;
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_GE(v, 0.0);
  }
}

TEST(FieldModel, WrongInputSize) {
  const FieldModel m = test::small_model(3, 1);
  EXPECT_THROW(field_value(m, Eigen::VectorXd::Zero(8)), DimensionMismatch);
}

TEST(InputGradient, MatchesCentralDifferences) {
  Rng rng(6);
  const double h = 1e-5;
  for (int trial = 0; trial < 10; ++trial) {
    const FieldModel m = test::small_model(4, 100 + static_cast<std::uint64_t>(trial));
    const Eigen::VectorXd x = random_pose(4, rng).ambient();
    const Eigen::VectorXd g = input_gradient(m, x);
    Eigen::VectorXd fd(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      Eigen::VectorXd xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      fd[i] = (field_value(m, xp) - field_value(m, xm)) / (2 * h);
    }
    EXPECT_LT((g - fd).norm() / std::max(fd.norm(), 1e-12), 1e-5);
  }
}

TEST(Losses, ManifoldOnlyBatchHasNoEikonalTerm) {
  const FieldModel m = test::small_model(3, 8);
  Rng rng(7);
  std::vector<LabeledPose> batch;
  for (int i = 0; i < 5; ++i) batch.push_back({random_pose(3, rng), 0.0, Tier::manifold});
  const LossResult with = loss_and_param_grads(m, batch, 0.1);
  const LossResult without = loss_and_param_grads(m, batch, 0.0);
  EXPECT_EQ(with.eikonal, 0.0);
  EXPECT_EQ(with.grads, without.grads);
}

TEST(Losses, ZeroFieldOnZeroLabelsIsPerfect) {
  // Final bias far below zero: softplus underflows to exactly 0 everywhere.
  const FieldModel m = zero_output_model(3, -20.0);
  Rng rng(8);
  std::vector<LabeledPose> batch;
  for (int i = 0; i < 5; ++i) batch.push_back({random_pose(3, rng), 0.0, Tier::manifold});
  const LossResult r = loss_and_param_grads(m, batch, 0.1);
  EXPECT_EQ(r.udf, 0.0);
  EXPECT_EQ(r.eikonal, 0.0);
  for (double g : r.grads) EXPECT_EQ(g, 0.0);
}

TEST(Losses, SumReductionValues) {
  const FieldModel m = test::small_model(3, 9);
  Rng rng(9);
  std::vector<LabeledPose> batch;
  double udf = 0.0, eik = 0.0;
  for (int i = 0; i < 6; ++i) {
    const Pose p = random_pose(3, rng);
    const double d = i % 3 == 0 ? 0.0 : 0.2 * i;
    batch.push_back({p, d, d == 0.0 ? Tier::manifold : Tier::far});
    udf += std::abs(forward(m, p).value - d);
    if (d != 0.0) {
      const double n = input_gradient(m, p).norm();
      eik += (n - 1.0) * (n - 1.0);
    }
  }
  const LossResult r = loss_and_param_grads(m, batch, 0.1);
  EXPECT_NEAR(r.udf, udf, 1e-13);
  EXPECT_NEAR(r.eikonal, eik, 1e-13);
}

TEST(Losses, ParameterGradientMatchesDirectionalDifferences) {
  Rng rng(10);
  std::normal_distribution<double> n(0.0, 1.0);
  const double lambda = 0.1;
  const double h = 1e-5;
  for (int trial = 0; trial < 3; ++trial) {
    const FieldModel m = test::small_model(4, 200 + static_cast<std::uint64_t>(trial));
    std::vector<LabeledPose> batch;
    for (int i = 0; i < 6; ++i) {
      // Labels well away from f so |f - d| stays differentiable.
      const double d = i % 2 == 0 ? 0.0 : 2.0 + 0.1 * i;
      batch.push_back({random_pose(4, rng), d, d == 0.0 ? Tier::manifold : Tier::far});
    }
    const LossResult r = loss_and_param_grads(m, batch, lambda);
    auto total = [&](const FieldModel& mm) {
      const LossResult l = loss_and_param_grads(mm, batch, lambda);
      return l.udf + lambda * l.eikonal;
    };
    for (int dir = 0; dir < 5; ++dir) {
      std::vector<double> v(m.num_parameters());
      for (double& e : v) e = n(rng);
      double analytic = 0.0;
      for (std::size_t i = 0; i < v.size(); ++i) analytic += r.grads[i] * v[i];
      FieldModel mp = m, mm = m;
      for (std::size_t i = 0; i < v.size(); ++i) {
        mp.parameters()[i] += h * v[i];
        mm.parameters()[i] -= h * v[i];
      }
      const double fd = (total(mp) - total(mm)) / (2 * h);
      EXPECT_LT(test::rel_err(analytic, fd), 1e-4) << analytic << " vs " << fd;
    }
  }
}

TEST(Checkpoint, RoundTripBitExact) {
  const FieldModel m = init_model(SkeletonTopology::binary_tree(5), 6, 32, 3);
  const auto path = test::temp_path("model.pnmd");
  save_model(m, path);
  const FieldModel back = load_model(path);
  EXPECT_EQ(back, m);
  Rng rng(11);
  for (int i = 0; i < 100; ++i) {
    const Pose p = random_pose(5, rng);
    EXPECT_EQ(forward(back, p).value, forward(m, p).value);
  }
}

TEST(Checkpoint, ShapeMismatchAndCorruption) {
  const FieldModel m = init_model(SkeletonTopology::binary_tree(5), 6, 32, 3);
  const auto path = test::temp_path("model2.pnmd");
  save_model(m, path);
  EXPECT_THROW(load_model(path, SkeletonTopology::binary_tree(4)), ShapeMismatch);
  EXPECT_NO_THROW(load_model(path, SkeletonTopology::binary_tree(5)));

  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 100);
  EXPECT_THROW(load_model(path), FormatError);
}

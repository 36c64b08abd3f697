#include "properties.hpp"

#include <gtest/gtest.h>

using namespace ddsafe;

namespace {

struct Known
{
  Mat A, B;
};

Known known_2x2()
{
  Known k;
  k.A = (Mat(2, 2) << 0.9, 0.2, -0.1, 0.8).finished();
  k.B = (Mat(2, 1) << 0.0, 1.0).finished();
  return k;
}

NoiseModel zero_noise(Index n)
{
  const Zonotope z(Vec::Zero(n));
  return NoiseModel{z, z, z};
}

Mat stacked(const Known& k)
{
  Mat AB(k.A.rows(), k.A.cols() + k.B.cols());
  AB << k.A, k.B;
  return AB;
}

}  // namespace

TEST(BuildDataMatrices, ShiftPairing)
{
  Trajectory t{(Mat(1, 3) << 0, 1, 2).finished(), (Mat(1, 2) << 10, 11).finished()};
  const DataSet d = build_data_matrices(TrajectorySet{{t}});
  EXPECT_EQ(d.y_minus, (Mat(1, 2) << 0, 1).finished());
  EXPECT_EQ(d.y_plus, (Mat(1, 2) << 1, 2).finished());
  EXPECT_EQ(d.u_minus, (Mat(1, 2) << 10, 11).finished());
}

TEST(BuildDataMatrices, NoCrossTrajectoryPairs)
{
  Trajectory a{(Mat(1, 2) << 0, 1).finished(), (Mat(1, 1) << 5).finished()};
  Trajectory b{(Mat(1, 2) << 7, 8).finished(), (Mat(1, 1) << 6).finished()};
  const DataSet d = build_data_matrices(TrajectorySet{{a, b}});
  EXPECT_EQ(d.samples(), 2);
  EXPECT_EQ(d.y_minus, (Mat(1, 2) << 0, 7).finished());
  EXPECT_EQ(d.y_plus, (Mat(1, 2) << 1, 8).finished());

  std::mt19937_64 rng(1);
  const Known k = known_2x2();
  const TrajectorySet ts = oracle::simulate_data(k.A, k.B, zero_noise(2), 4, 6, rng);
  EXPECT_EQ(build_data_matrices(ts).samples(), 24);
}

TEST(BuildDataMatrices, Errors)
{
  EXPECT_THROW(build_data_matrices(TrajectorySet{}), std::invalid_argument);
  Trajectory bad{Mat::Zero(1, 3), Mat::Zero(1, 1)};
  EXPECT_THROW(build_data_matrices(TrajectorySet{{bad}}), std::invalid_argument);
  Trajectory single{Mat::Zero(1, 1), Mat::Zero(1, 0)};
  EXPECT_THROW(build_data_matrices(TrajectorySet{{single}}), std::invalid_argument);
}

TEST(LiftNoise, ShapesAndDegenerateCases)
{
  const Zonotope Z((Vec(2) << 1, 2).finished(), (Mat(2, 2) << 1, 0, 0.5, 1).finished());
  const MatrixZonotope one = lift_noise(Z, 1);
  EXPECT_EQ(one.center(), Mat(Z.center()));
  ASSERT_EQ(one.num_generators(), 2);
  EXPECT_EQ(one.generators()[0], Mat(Z.generators().col(0)));

  const MatrixZonotope pt = lift_noise(Zonotope((Vec(2) << 3, 4).finished()), 5);
  EXPECT_EQ(pt.num_generators(), 0);
  EXPECT_EQ(pt.center(), ((Vec(2) << 3, 4).finished()).replicate(1, 5));

  EXPECT_EQ(lift_noise(Z, 3).num_generators(), 6);
  EXPECT_THROW(lift_noise(Z, 0), std::invalid_argument);
}

TEST(LiftNoise, ColumnwiseMembersAreMembers)
{
  std::mt19937_64 rng(2);
  const Zonotope Z = oracle::random_zonotope(2, 3, rng);
  const MatrixZonotope M = lift_noise(Z, 3);
  for (int i = 0; i < 1000; ++i) {
    Mat X(2, 3);
    for (Index c = 0; c < 3; ++c) X.col(c) = oracle::sample_point(Z, rng);
    ASSERT_LT(oracle::matzono_residual(M, X), 1e-8);
  }
}

TEST(PseudoInverse, PenroseIdentity)
{
  std::mt19937_64 rng(3);
  const Mat D = oracle::random_mat(5, 40, rng);
  const Mat Dp = pseudo_inverse(D);
  EXPECT_LT((D * Dp * D - D).norm() / D.norm(), 1e-8);
  EXPECT_EQ(numerical_rank(D), 5);
}

TEST(ComputeModelSet, NoiselessRecoversSystem)
{
  std::mt19937_64 rng(4);
  const Known k = known_2x2();
  const TrajectorySet ts = oracle::simulate_data(k.A, k.B, zero_noise(2), 3, 5, rng);
  const ModelSet M = compute_model_set(build_data_matrices(ts), zero_noise(2));
  EXPECT_LT((M.sigma().center() - stacked(k)).norm() / stacked(k).norm(), 1e-9);
  EXPECT_EQ(M.state_dim(), 2);
  EXPECT_EQ(M.input_dim(), 1);
}

TEST(ComputeModelSet, NoisyDataContainsTrueSystem)
{
  std::mt19937_64 rng(5);
  const Known k = known_2x2();
  const NoiseModel noise = NoiseModel::from_norm_bound(oracle::box_zono(Vec::Constant(2, 0.01)),
                                                       oracle::box_zono(Vec::Constant(2, 0.005)), 1.1);
  const TrajectorySet ts = oracle::simulate_data(k.A, k.B, noise, 4, 10, rng);
  const ModelSet M = compute_model_set(build_data_matrices(ts), noise);
  EXPECT_LT(oracle::matzono_residual(M.sigma(), stacked(k)), 1e-8);
  EXPECT_TRUE(interval_hull(M.sigma()).contains(stacked(k)));
}

TEST(ComputeModelSet, RankDeficientDataRejected)
{
  // Inputs proportional to the first state component: [Y; U] loses rank.
  Trajectory t{Mat::Zero(2, 6), Mat::Zero(1, 5)};
  std::mt19937_64 rng(6);
  t.states.col(0) = oracle::random_mat(2, 1, rng).col(0);
  for (Index i = 0; i < 5; ++i) {
    t.inputs(0, i) = 2.0 * t.states(0, i);
    t.states.col(i + 1) = (Vec(2) << t.states(1, i), -t.states(0, i)).finished();
  }
  EXPECT_THROW(compute_model_set(build_data_matrices(TrajectorySet{{t}}), zero_noise(2)), InsufficientExcitation);
}

TEST(ComputeModelSet, DuplicatedColumnKeepsNoiselessModel)
{
  std::mt19937_64 rng(7);
  const Known k = known_2x2();
  TrajectorySet ts = oracle::simulate_data(k.A, k.B, zero_noise(2), 3, 5, rng);
  const ModelSet M1 = compute_model_set(build_data_matrices(ts), zero_noise(2));
  // Duplicate the first data column as an extra one-step trajectory.
  ts.trajectories.push_back(Trajectory{ts.trajectories[0].states.leftCols(2), ts.trajectories[0].inputs.leftCols(1)});
  const ModelSet M2 = compute_model_set(build_data_matrices(ts), zero_noise(2));
  const IntervalMatrix h1 = interval_hull(M1.sigma());
  const IntervalMatrix h2 = interval_hull(M2.sigma());
  EXPECT_LT((h1.lower - h2.lower).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT((h1.upper - h2.upper).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(ComputeModelSet, DuplicatedColumnWithNoiseStaysSound)
{
  std::mt19937_64 rng(8);
  const Known k = known_2x2();
  const NoiseModel noise = NoiseModel::from_norm_bound(oracle::box_zono(Vec::Constant(2, 0.01)),
                                                       oracle::box_zono(Vec::Constant(2, 0.005)), 1.1);
  TrajectorySet ts = oracle::simulate_data(k.A, k.B, noise, 3, 8, rng);
  ts.trajectories.push_back(Trajectory{ts.trajectories[0].states.leftCols(2), ts.trajectories[0].inputs.leftCols(1)});
  const ModelSet M = compute_model_set(build_data_matrices(ts), noise);
  EXPECT_LT(oracle::matzono_residual(M.sigma(), stacked(k)), 1e-8);
}

TEST(ComputeModelSet, ShrinkingNoiseNeverEnlargesHull)
{
  std::mt19937_64 rng(9);
  const Known k = known_2x2();
  const NoiseModel noise = NoiseModel::from_norm_bound(oracle::box_zono(Vec::Constant(2, 0.01)),
                                                       oracle::box_zono(Vec::Constant(2, 0.005)), 1.1);
  const DataSet d = build_data_matrices(oracle::simulate_data(k.A, k.B, noise.scaled(0.25), 4, 8, rng));
  Mat prev = interval_hull(compute_model_set(d, noise).sigma()).radius();
  for (double alpha : {0.75, 0.5, 0.25}) {
    const Mat r = interval_hull(compute_model_set(d, noise.scaled(alpha)).sigma()).radius();
    EXPECT_TRUE((r.array() <= prev.array() + 1e-15).all()) << "alpha " << alpha;
    prev = r;
  }
}

TEST(NoiseModel, NormBoundCoversPropagatedNoise)
{
  std::mt19937_64 rng(10);
  const Mat A = oracle::random_mat(3, 3, rng);
  const double a = A.cwiseAbs().rowwise().sum().maxCoeff();
  const Zonotope Zv(Vec::Zero(3), oracle::random_mat(3, 4, rng, 0.1));
  const NoiseModel nm = NoiseModel::from_norm_bound(oracle::box_zono(Vec::Constant(3, 0.01)), Zv, a);
  const IntervalBox h = interval_hull(nm.propagated_measurement);
  for (int i = 0; i < 10000; ++i) ASSERT_TRUE(oracle::in_box(h, A * oracle::sample_point(Zv, rng)));
  EXPECT_THROW(NoiseModel::from_norm_bound(Zv, Zv, -1.0), std::invalid_argument);
}

TEST(ModelSet, FactoredProductMatchesGenericHull)
{
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const props::ReachCase c = props::random_reach_case(rng);
    const ModelSet M = compute_model_set(build_data_matrices(c.data), c.noise);
    const Zonotope Z = oracle::random_zonotope(M.sigma().cols(), 3, rng);
    const IntervalBox a = interval_hull(M.product(Z));
    const IntervalBox b = interval_hull(matzono_mul_zono(M.sigma(), Z));
    const double scale = 1.0 + b.upper().cwiseAbs().maxCoeff();
    ASSERT_LT((a.lower() - b.lower()).cwiseAbs().maxCoeff(), 1e-10 * scale);
    ASSERT_LT((a.upper() - b.upper()).cwiseAbs().maxCoeff(), 1e-10 * scale);
  }
}

TEST(ReachStep, PointModelCollapsesToDynamics)
{
  std::mt19937_64 rng(12);
  const Known k = known_2x2();
  const ModelSet M = compute_model_set(build_data_matrices(oracle::simulate_data(k.A, k.B, zero_noise(2), 3, 5, rng)),
                                       zero_noise(2));
  const Vec y = (Vec(2) << 0.3, -0.7).finished();
  const Vec u = Vec::Constant(1, 0.4);
  const Zonotope R = reach_step(M, Zonotope(y), Zonotope(u), zero_noise(2));
  EXPECT_LT((R.center() - (k.A * y + k.B * u)).norm(), 1e-9);
  EXPECT_LT(interval_hull(R).radius().maxCoeff(), 1e-9);
}

TEST(ReachStep, IdentityDynamicsKeepsHull)
{
  std::mt19937_64 rng(13);
  const Mat A = Mat::Identity(2, 2);
  const Mat B = (Mat(2, 1) << 1, 0.5).finished();
  const ModelSet M =
      compute_model_set(build_data_matrices(oracle::simulate_data(A, B, zero_noise(2), 3, 5, rng)), zero_noise(2));
  const Zonotope R0(Vec::Zero(2), (Mat(2, 2) << 0.3, 0.1, 0, 0.2).finished());
  const IntervalBox h0 = interval_hull(R0);
  const IntervalBox h1 = interval_hull(reach_step(M, R0, Zonotope(Vec::Zero(1)), zero_noise(2)));
  EXPECT_LT((h0.lower() - h1.lower()).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT((h0.upper() - h1.upper()).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(ReachStep, DimensionErrors)
{
  std::mt19937_64 rng(14);
  const Known k = known_2x2();
  const ModelSet M = compute_model_set(build_data_matrices(oracle::simulate_data(k.A, k.B, zero_noise(2), 3, 5, rng)),
                                       zero_noise(2));
  EXPECT_THROW(reach_step(M, Zonotope(Vec::Zero(3)), Zonotope(Vec::Zero(1)), zero_noise(2)), std::invalid_argument);
  EXPECT_THROW(reach_step(M, Zonotope(Vec::Zero(2)), Zonotope(Vec::Zero(2)), zero_noise(2)), std::invalid_argument);
}

TEST(ReachStep, MonteCarloContainmentTenSteps)
{
  const auto res = props::reach_soundness(15, 10000, 10);
  EXPECT_LT(res.membership_residual, 1e-8);
  EXPECT_EQ(res.escapes, 0) << "of " << res.checks;
}

TEST(ReachStep, GeneratorCapApplied)
{
  std::mt19937_64 rng(16);
  const props::ReachCase c = props::random_reach_case(rng);
  const ModelSet M = compute_model_set(build_data_matrices(c.data), c.noise);
  const Index n = c.A.rows();
  Zonotope R(Vec::Zero(n));
  for (int t = 0; t < 10; ++t) {
    R = reach_step(M, R, Zonotope(Vec::Zero(c.B.cols())), c.noise);
    EXPECT_LE(R.num_generators(), 5 * n);
  }
  EXPECT_LE(reach_step(M, R, Zonotope(Vec::Zero(c.B.cols())), c.noise, n + 1).num_generators(), n + 1);
}

TEST(ReachHorizon, EmptySingleAndMonotoneWidths)
{
  std::mt19937_64 rng(17);
  const auto [A, B] = double_integrator(0.1, 0.05);
  const NoiseModel noise = WorldConfig::default_noise();
  const ModelSet M = compute_model_set(build_data_matrices(oracle::simulate_data(A, B, noise, 20, 10, rng)), noise);
  const Zonotope R0((Vec(4) << 0.5, -0.5, 0.1, 0).finished());
  EXPECT_TRUE(reach_horizon(M, R0, {}, noise).empty());

  const Zonotope u0(Vec::Zero(2), 0.1 * Mat::Identity(2, 2));
  const auto one = reach_horizon(M, R0, {u0}, noise);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0], reach_step(M, R0, u0, noise));

  const auto seq = reach_horizon(M, R0, std::vector<Zonotope>(15, u0), noise);
  for (size_t t = 1; t < seq.size(); ++t) {
    const Vec w0 = interval_hull(seq[t - 1]).radius();
    const Vec w1 = interval_hull(seq[t]).radius();
    EXPECT_TRUE((w1.array() >= w0.array() - 1e-15).all()) << "step " << t;
  }
}

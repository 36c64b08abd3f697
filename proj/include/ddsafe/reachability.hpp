#pragma once

/**
 * @file reachability.hpp
 * @brief Data-driven reachable sets of an unknown linear system.
 *
 * Offline trajectories of y(t+1) = A y(t) + B u(t) + w + v(t+1) - A v(t)
 * are stacked into data matrices; the set of matrices [A B] consistent with
 * the data and the noise bounds is a matrix zonotope, and multiplying it with
 * the Cartesian product of a state set and an input set yields a sound
 * successor set.
 */

#include "ddsafe/set_algebra.hpp"

#include <Eigen/SVD>

#include <stdexcept>
#include <string>
#include <vector>

namespace ddsafe {

/// Thrown when the stacked state/input data matrix is rank deficient.
class InsufficientExcitation : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// One input-state trajectory: states n x (T+1), inputs m x T.
struct Trajectory
{
  Mat states;
  Mat inputs;

  Index length() const { return inputs.cols(); }
};

struct TrajectorySet
{
  std::vector<Trajectory> trajectories;

  Index state_dim() const { return trajectories.empty() ? 0 : trajectories.front().states.rows(); }
  Index input_dim() const { return trajectories.empty() ? 0 : trajectories.front().inputs.rows(); }
  Index total_steps() const
  {
    Index T = 0;
    for (const auto& t : trajectories) T += t.length();
    return T;
  }
};

/// Shift-paired data: column j of y_plus is the successor of column j of y_minus.
struct DataSet
{
  Mat y_minus;
  Mat y_plus;
  Mat u_minus;

  Index samples() const { return y_minus.cols(); }
  Index state_dim() const { return y_minus.rows(); }
  Index input_dim() const { return u_minus.rows(); }

  /// [Y_-; U_-]
  Mat stacked() const
  {
    Mat D(state_dim() + input_dim(), samples());
    D << y_minus, u_minus;
    return D;
  }
};

inline DataSet build_data_matrices(const TrajectorySet& trajs)
{
  if (trajs.trajectories.empty()) throw std::invalid_argument("build_data_matrices: empty trajectory set");
  const Index n = trajs.state_dim();
  const Index m = trajs.input_dim();
  for (const auto& t : trajs.trajectories) {
    if (t.states.rows() != n || t.inputs.rows() != m) {
      throw std::invalid_argument("build_data_matrices: inconsistent state or input dimension");
    }
    if (t.states.cols() < 2) throw std::invalid_argument("build_data_matrices: trajectory has fewer than 2 states");
    if (t.inputs.cols() != t.states.cols() - 1) {
      throw std::invalid_argument("build_data_matrices: input count must equal state count - 1");
    }
  }
  const Index T = trajs.total_steps();
  DataSet d{Mat(n, T), Mat(n, T), Mat(m, T)};
  Index col = 0;
  for (const auto& t : trajs.trajectories) {
    const Index len = t.length();
    d.y_minus.middleCols(col, len) = t.states.leftCols(len);
    d.y_plus.middleCols(col, len) = t.states.rightCols(len);
    d.u_minus.middleCols(col, len) = t.inputs;
    col += len;
  }
  return d;
}

/**
 * Matrix zonotope containing every n x T matrix whose columns all lie in Z.
 * One generator per (generator of Z, column) pair.
 */
inline MatrixZonotope lift_noise(const Zonotope& Z, Index T)
{
  if (T < 1) throw std::invalid_argument("lift_noise: T must be at least 1");
  const Index n = Z.dim();
  Mat C = Z.center().replicate(1, T);
  std::vector<Mat> gens;
  gens.reserve(static_cast<size_t>(Z.num_generators() * T));
  for (Index j = 0; j < Z.num_generators(); ++j) {
    for (Index t = 0; t < T; ++t) {
      Mat G = Mat::Zero(n, T);
      G.col(t) = Z.generators().col(j);
      gens.push_back(std::move(G));
    }
  }
  return MatrixZonotope(std::move(C), std::move(gens));
}

/**
 * @brief Noise bounds: process noise Zw, measurement noise Zv, and a bound
 * Z_Av on the one-step propagated measurement noise A v.
 */
struct NoiseModel
{
  Zonotope process;
  Zonotope measurement;
  Zonotope propagated_measurement;

  Index dim() const { return process.dim(); }

  void validate() const
  {
    detail::require(process.dim() == measurement.dim() && process.dim() == propagated_measurement.dim(),
                    "NoiseModel: noise zonotopes must share a dimension");
  }

  /**
   * Builds Z_Av from a bound `a_norm_bound` on the induced infinity norm of A:
   * |(A v)_i| <= ||A||_inf max_j |v_j|, so the centered box of half-width
   * a_norm_bound * max_j (|c_j| + r_j) contains A Zv.
   */
  static NoiseModel from_norm_bound(Zonotope process, Zonotope measurement, double a_norm_bound)
  {
    detail::require(a_norm_bound >= 0.0, "NoiseModel: norm bound must be non-negative");
    const IntervalBox hull = interval_hull(measurement);
    const double vmax = hull.lower().cwiseAbs().cwiseMax(hull.upper().cwiseAbs()).maxCoeff();
    const Index n = measurement.dim();
    Zonotope av(Vec::Zero(n), Mat(Vec::Constant(n, a_norm_bound * vmax).asDiagonal()));
    NoiseModel nm{std::move(process), std::move(measurement), std::move(av)};
    nm.validate();
    return nm;
  }

  /// Zw + Zv - Z_Av, the additive term of every reach step.
  Zonotope additive() const
  {
    return minkowski_subtract(minkowski_sum(process, measurement), propagated_measurement);
  }

  /// Every noise zonotope scaled about the origin by alpha.
  NoiseModel scaled(double alpha) const
  {
    auto s = [alpha](const Zonotope& z) { return Zonotope(alpha * z.center(), alpha * z.generators()); };
    return NoiseModel{s(process), s(measurement), s(propagated_measurement)};
  }
};

/// Moore-Penrose pseudoinverse via SVD; singular values below rel_cutoff * sigma_max are dropped.
inline Mat pseudo_inverse(const Mat& D, double rel_cutoff = 1e-10)
{
  Eigen::JacobiSVD<Mat> svd(D, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vec& s = svd.singularValues();
  const double cutoff = s.size() > 0 ? rel_cutoff * s(0) : 0.0;
  Vec inv = Vec::Zero(s.size());
  for (Index i = 0; i < s.size(); ++i) {
    if (s(i) > cutoff) inv(i) = 1.0 / s(i);
  }
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

/// Numerical rank with the same relative cutoff as pseudo_inverse.
inline Index numerical_rank(const Mat& D, double rel_cutoff = 1e-10)
{
  Eigen::JacobiSVD<Mat> svd(D);
  const Vec& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return 0;
  Index r = 0;
  for (Index i = 0; i < s.size(); ++i) r += s(i) > rel_cutoff * s(0) ? 1 : 0;
  return r;
}

class ModelSet;
ModelSet compute_model_set(const DataSet& data, const NoiseModel& noise);

/**
 * @brief Matrix zonotope of all [A B] consistent with the data and noise bounds.
 *
 * Besides the explicit matrix zonotope, the set keeps its factored form: every
 * generator is an outer product g d_t^T of a noise generator g and a row d_t of
 * the data pseudoinverse. product() uses that structure to merge collinear
 * generators, which yields the same set as matzono_mul_zono(sigma(), Z) with
 * gamma_Z + J generators instead of gamma_Z + gamma_M (1 + gamma_Z).
 */
class ModelSet
{
public:
  const MatrixZonotope& sigma() const { return sigma_; }
  Index state_dim() const { return sigma_.rows(); }
  Index input_dim() const { return sigma_.cols() - sigma_.rows(); }
  Index samples() const { return pinv_.rows(); }

  /// Noise generators g_j of Zw, Zv and Z_Av side by side (n x J).
  const Mat& noise_generators() const { return noise_gens_; }
  /// Pseudoinverse of the stacked data matrix (T x (n+m)).
  const Mat& data_pinv() const { return pinv_; }

  /// Same set as matzono_mul_zono(sigma(), Z), collinear generators merged.
  Zonotope product(const Zonotope& Z) const
  {
    detail::require_dims(sigma_.cols(), Z.dim(), "ModelSet::product");
    const Index gz = Z.num_generators();
    const Index J = noise_gens_.cols();
    Mat P(Z.dim(), gz + 1);
    P.col(0) = Z.center();
    P.rightCols(gz) = Z.generators();
    // Sum over t of |d_t . z| for the center and every generator of Z.
    const double scale = (pinv_ * P).cwiseAbs().sum();
    Mat G(state_dim(), gz + J);
    G.leftCols(gz) = sigma_.center() * Z.generators();
    G.rightCols(J) = scale * noise_gens_;
    return Zonotope(sigma_.center() * Z.center(), std::move(G));
  }

private:
  friend ModelSet compute_model_set(const DataSet& data, const NoiseModel& noise);
  ModelSet(MatrixZonotope sigma, Mat noise_gens, Mat pinv)
      : sigma_(std::move(sigma)), noise_gens_(std::move(noise_gens)), pinv_(std::move(pinv))
  {}

  MatrixZonotope sigma_;
  Mat noise_gens_;
  Mat pinv_;
};

/**
 * M_Sigma = (Y_+ - M_w - M_v + M_Av) [Y_-; U_-]^+ with M_x = lift_noise(Z_x, T).
 * Throws InsufficientExcitation when [Y_-; U_-] lacks full row rank.
 */
inline ModelSet compute_model_set(const DataSet& data, const NoiseModel& noise)
{
  noise.validate();
  const Index n = data.state_dim();
  const Index T = data.samples();
  detail::require(data.y_plus.rows() == n && data.y_plus.cols() == T && data.u_minus.cols() == T,
                  "compute_model_set: data matrices disagree in shape");
  detail::require_dims(noise.dim(), n, "compute_model_set");

  const Mat D = data.stacked();
  const Index rank = numerical_rank(D);
  if (rank < D.rows()) {
    throw InsufficientExcitation("insufficiently exciting data: rank of [Y-; U-] is " + std::to_string(rank) +
                                 ", need " + std::to_string(D.rows()) + " (T_total = " + std::to_string(T) + ")");
  }
  const Mat Dp = pseudo_inverse(D);

  const MatrixZonotope Mw = lift_noise(noise.process, T);
  const MatrixZonotope Mv = lift_noise(noise.measurement, T);
  const MatrixZonotope Mav = lift_noise(noise.propagated_measurement, T);
  const MatrixZonotope lhs =
      minkowski_sum(minkowski_subtract(minkowski_subtract(MatrixZonotope(data.y_plus), Mw), Mv), Mav);
  MatrixZonotope sigma = matzono_mul_matrix(lhs, Dp);

  const Index J = noise.process.num_generators() + noise.measurement.num_generators() +
                  noise.propagated_measurement.num_generators();
  Mat gens(n, J);
  gens << noise.process.generators(), noise.measurement.generators(), noise.propagated_measurement.generators();
  return ModelSet(std::move(sigma), std::move(gens), Dp);
}

/// Default generator cap of the reach sets: 5 n.
inline Index default_generator_cap(Index n) { return 5 * n; }

/**
 * One step: M_Sigma (R x Z_u) + Zw + Zv - Z_Av, then box reduction to
 * `max_generators` (0 selects 5 n).
 */
inline Zonotope reach_step(const ModelSet& model, const Zonotope& R, const Zonotope& Zu, const NoiseModel& noise,
                           Index max_generators = 0)
{
  detail::require_dims(R.dim(), model.state_dim(), "reach_step (state)");
  detail::require_dims(Zu.dim(), model.input_dim(), "reach_step (input)");
  detail::require_dims(noise.dim(), model.state_dim(), "reach_step (noise)");
  const Zonotope next = minkowski_sum(model.product(cartesian_product(R, Zu)), noise.additive());
  return reduce_order(next, max_generators > 0 ? max_generators : default_generator_cap(R.dim()));
}

/// Iterated reach_step; returns [R_1, ..., R_N] for N = inputs.size().
inline std::vector<Zonotope> reach_horizon(const ModelSet& model, const Zonotope& R0,
                                           const std::vector<Zonotope>& inputs, const NoiseModel& noise,
                                           Index max_generators = 0)
{
  std::vector<Zonotope> out;
  out.reserve(inputs.size());
  const Zonotope* cur = &R0;
  for (const auto& u : inputs) {
    out.push_back(reach_step(model, *cur, u, noise, max_generators));
    cur = &out.back();
  }
  return out;
}

}  // namespace ddsafe

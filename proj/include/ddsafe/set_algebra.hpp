#pragma once

/**
 * @file set_algebra.hpp
 * @brief Zonotopes, matrix zonotopes and interval boxes.
 *
 * A zonotope is the set Z = { c + G b | b in [-1, 1]^gamma } written <c, G>.
 * A matrix zonotope is the set M = { C + sum_i b_i G_i | b in [-1, 1]^gamma }.
 * Containment and intersection tests go through interval hulls and are
 * therefore sufficient-only: a `true` from box_contains and a `false` from
 * may_intersect are certificates, the opposite answers are not.
 *
 * All sets are closed. Boundary contact counts as containment and as a
 * possible intersection.
 */

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ddsafe {

using Index = Eigen::Index;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

namespace detail {

inline void require(bool cond, const char* what)
{
  if (!cond) throw std::invalid_argument(what);
}

inline void require_dims(Index a, Index b, const char* op)
{
  if (a != b) {
    throw std::invalid_argument(std::string(op) + ": dimension mismatch (" + std::to_string(a) +
                                " vs " + std::to_string(b) + ")");
  }
}

}  // namespace detail

/**
 * @brief Axis-aligned box [lower, upper]. Bounds may be infinite, which is how
 * unconstrained coordinates (e.g. velocities in a position constraint) are
 * expressed.
 */
class IntervalBox
{
public:
  IntervalBox() = default;

  IntervalBox(Vec lower, Vec upper) : lower_(std::move(lower)), upper_(std::move(upper))
  {
    detail::require_dims(lower_.size(), upper_.size(), "IntervalBox");
    for (Index i = 0; i < lower_.size(); ++i) {
      detail::require(!std::isnan(lower_(i)) && !std::isnan(upper_(i)), "IntervalBox: NaN bound");
      detail::require(lower_(i) <= upper_(i), "IntervalBox: lower bound exceeds upper bound");
    }
  }

  static IntervalBox point(const Vec& p) { return IntervalBox(p, p); }

  static IntervalBox unbounded(Index n)
  {
    const double inf = std::numeric_limits<double>::infinity();
    return IntervalBox(Vec::Constant(n, -inf), Vec::Constant(n, inf));
  }

  /// Box centered at `center` with half-widths `radius` (radius >= 0).
  static IntervalBox from_center(const Vec& center, const Vec& radius)
  {
    return IntervalBox(center - radius, center + radius);
  }

  Index dim() const { return lower_.size(); }
  const Vec& lower() const { return lower_; }
  const Vec& upper() const { return upper_; }
  Vec center() const { return 0.5 * (lower_ + upper_); }
  Vec radius() const { return 0.5 * (upper_ - lower_); }
  bool is_bounded() const { return lower_.allFinite() && upper_.allFinite(); }

  bool contains(const Vec& p) const
  {
    detail::require_dims(dim(), p.size(), "IntervalBox::contains");
    return (p.array() >= lower_.array()).all() && (p.array() <= upper_.array()).all();
  }

  bool contains(const IntervalBox& other) const
  {
    detail::require_dims(dim(), other.dim(), "IntervalBox::contains");
    return (other.lower_.array() >= lower_.array()).all() &&
           (other.upper_.array() <= upper_.array()).all();
  }

  /// Closed intersection test: touching boxes intersect.
  bool intersects(const IntervalBox& other) const
  {
    detail::require_dims(dim(), other.dim(), "IntervalBox::intersects");
    return (lower_.array() <= other.upper_.array()).all() &&
           (other.lower_.array() <= upper_.array()).all();
  }

  /// Minkowski sum with the centered box of half-widths r.
  IntervalBox inflated(const Vec& r) const
  {
    detail::require_dims(dim(), r.size(), "IntervalBox::inflated");
    return IntervalBox(lower_ - r, upper_ + r);
  }

  /// Shrinks every face inward by r. Throws if the result would be empty.
  IntervalBox deflated(const Vec& r) const
  {
    detail::require_dims(dim(), r.size(), "IntervalBox::deflated");
    Vec lo = lower_ + r;
    Vec hi = upper_ - r;
    detail::require((lo.array() <= hi.array()).all(), "IntervalBox::deflated: box collapses");
    return IntervalBox(std::move(lo), std::move(hi));
  }

  /// Coordinates [start, start + count).
  IntervalBox segment(Index start, Index count) const
  {
    return IntervalBox(lower_.segment(start, count), upper_.segment(start, count));
  }

  /// Clamps p into the box.
  Vec clamp(const Vec& p) const
  {
    detail::require_dims(dim(), p.size(), "IntervalBox::clamp");
    return p.cwiseMax(lower_).cwiseMin(upper_);
  }

  friend bool operator==(const IntervalBox& a, const IntervalBox& b)
  {
    return a.lower_ == b.lower_ && a.upper_ == b.upper_;
  }

private:
  Vec lower_;
  Vec upper_;
};

/// Elementwise interval bounds of a set of matrices.
struct IntervalMatrix
{
  Mat lower;
  Mat upper;

  Mat center() const { return 0.5 * (lower + upper); }
  Mat radius() const { return 0.5 * (upper - lower); }
  bool contains(const Mat& X) const
  {
    return X.rows() == lower.rows() && X.cols() == lower.cols() &&
           (X.array() >= lower.array()).all() && (X.array() <= upper.array()).all();
  }
};

/**
 * @brief Zonotope <c, G> with center c in R^n and generator matrix G in R^{n x gamma}.
 *
 * gamma = 0 is a valid zonotope and represents the single point c.
 */
class Zonotope
{
public:
  Zonotope() = default;

  Zonotope(Vec center, Mat generators) : center_(std::move(center)), generators_(std::move(generators))
  {
    if (generators_.size() == 0 && generators_.rows() != center_.size()) {
      generators_.resize(center_.size(), 0);
    }
    detail::require_dims(generators_.rows(), center_.size(), "Zonotope");
    detail::require(center_.allFinite() && generators_.allFinite(), "Zonotope: non-finite entry");
  }

  /// Singleton {p}.
  explicit Zonotope(Vec point) : Zonotope(std::move(point), Mat()) {}

  /// Box zonotope <center, diag(radius)>. The box must be bounded.
  static Zonotope from_box(const IntervalBox& box)
  {
    detail::require(box.is_bounded(), "Zonotope::from_box: unbounded box");
    return Zonotope(box.center(), Mat(box.radius().asDiagonal()));
  }

  Index dim() const { return center_.size(); }
  Index num_generators() const { return generators_.cols(); }
  const Vec& center() const { return center_; }
  const Mat& generators() const { return generators_; }

  /// Point c + G factors, factors in [-1, 1]^gamma.
  Vec point_at(const Vec& factors) const
  {
    detail::require_dims(factors.size(), num_generators(), "Zonotope::point_at");
    return center_ + generators_ * factors;
  }

  friend bool operator==(const Zonotope& a, const Zonotope& b)
  {
    return a.center_ == b.center_ && a.generators_.rows() == b.generators_.rows() &&
           a.generators_.cols() == b.generators_.cols() && a.generators_ == b.generators_;
  }

private:
  Vec center_;
  Mat generators_;
};

/**
 * @brief Matrix zonotope with center C in R^{n x T} and generator matrices G_i of
 * the same shape.
 */
class MatrixZonotope
{
public:
  MatrixZonotope() = default;

  MatrixZonotope(Mat center, std::vector<Mat> generators)
      : center_(std::move(center)), generators_(std::move(generators))
  {
    detail::require(center_.allFinite(), "MatrixZonotope: non-finite center");
    for (const auto& g : generators_) {
      detail::require(g.rows() == center_.rows() && g.cols() == center_.cols(),
                      "MatrixZonotope: generator shape differs from center");
      detail::require(g.allFinite(), "MatrixZonotope: non-finite generator");
    }
  }

  explicit MatrixZonotope(Mat point) : MatrixZonotope(std::move(point), {}) {}

  Index rows() const { return center_.rows(); }
  Index cols() const { return center_.cols(); }
  Index num_generators() const { return static_cast<Index>(generators_.size()); }
  const Mat& center() const { return center_; }
  const std::vector<Mat>& generators() const { return generators_; }

  Mat member_at(const Vec& factors) const
  {
    detail::require_dims(factors.size(), num_generators(), "MatrixZonotope::member_at");
    Mat X = center_;
    for (Index i = 0; i < num_generators(); ++i) X += factors(i) * generators_[static_cast<size_t>(i)];
    return X;
  }

private:
  Mat center_;
  std::vector<Mat> generators_;
};

// ---------------------------------------------------------------------------
// Zonotope operations
// ---------------------------------------------------------------------------

/// L Z = <L c, L G>. Exact.
inline Zonotope linear_map(const Mat& L, const Zonotope& Z)
{
  detail::require_dims(L.cols(), Z.dim(), "linear_map");
  return Zonotope(L * Z.center(), L * Z.generators());
}

/// Z1 + Z2 = <c1 + c2, [G1, G2]>. Exact.
inline Zonotope minkowski_sum(const Zonotope& a, const Zonotope& b)
{
  detail::require_dims(a.dim(), b.dim(), "minkowski_sum");
  Mat G(a.dim(), a.num_generators() + b.num_generators());
  G << a.generators(), b.generators();
  return Zonotope(a.center() + b.center(), std::move(G));
}

/// Z1 - Z2 := Z1 + (-1) Z2. This is not the Pontryagin difference.
inline Zonotope minkowski_subtract(const Zonotope& a, const Zonotope& b)
{
  detail::require_dims(a.dim(), b.dim(), "minkowski_subtract");
  Mat G(a.dim(), a.num_generators() + b.num_generators());
  G << a.generators(), -b.generators();
  return Zonotope(a.center() - b.center(), std::move(G));
}

/// Z1 x Z2 with stacked center and block-diagonal generators.
inline Zonotope cartesian_product(const Zonotope& a, const Zonotope& b)
{
  Vec c(a.dim() + b.dim());
  c << a.center(), b.center();
  Mat G = Mat::Zero(c.size(), a.num_generators() + b.num_generators());
  G.topLeftCorner(a.dim(), a.num_generators()) = a.generators();
  G.bottomRightCorner(b.dim(), b.num_generators()) = b.generators();
  return Zonotope(std::move(c), std::move(G));
}

/// Tightest axis-aligned box containing Z: c -/+ rowwise sum of |G|.
inline IntervalBox interval_hull(const Zonotope& Z)
{
  const Vec r = Z.num_generators() > 0 ? Vec(Z.generators().cwiseAbs().rowwise().sum())
                                       : Vec(Vec::Zero(Z.dim()));
  return IntervalBox(Z.center() - r, Z.center() + r);
}

/// Sufficient test for Z subset of `outer`: interval_hull(Z) within outer (closed).
inline bool box_contains(const IntervalBox& outer, const Zonotope& Z)
{
  detail::require_dims(outer.dim(), Z.dim(), "box_contains");
  return outer.contains(interval_hull(Z));
}

/**
 * Conservative intersection test. Returns false only when the interval hulls
 * are disjoint, in which case the sets are certainly disjoint.
 */
inline bool may_intersect(const Zonotope& a, const Zonotope& b)
{
  detail::require_dims(a.dim(), b.dim(), "may_intersect");
  return interval_hull(a).intersects(interval_hull(b));
}

/**
 * @brief Over-approximation of { X z | X in M, z in Z }.
 *
 * Writing z = c + G b and X = C + sum_i a_i G_i, every product is
 * C c + C G b + sum_i a_i G_i c + sum_{i,k} a_i b_k G_i g_k with all
 * coefficients in [-1, 1], so the zonotope
 * <C c, [C G, G_1 c, ..., G_gamma c, G_i g_k for all i, k]> contains the product set.
 */
inline Zonotope matzono_mul_zono(const MatrixZonotope& M, const Zonotope& Z)
{
  detail::require_dims(M.cols(), Z.dim(), "matzono_mul_zono");
  const Index n = M.rows();
  const Index gz = Z.num_generators();
  const Index gm = M.num_generators();
  Mat G(n, gz + gm + gm * gz);
  G.leftCols(gz) = M.center() * Z.generators();
  Index col = gz;
  for (const auto& Gi : M.generators()) G.col(col++) = Gi * Z.center();
  for (const auto& Gi : M.generators()) {
    if (gz == 0) break;
    G.middleCols(col, gz) = Gi * Z.generators();
    col += gz;
  }
  return Zonotope(M.center() * Z.center(), std::move(G));
}

/// M P = <C P, {G_i P}>. Exact.
inline MatrixZonotope matzono_mul_matrix(const MatrixZonotope& M, const Mat& P)
{
  detail::require_dims(M.cols(), P.rows(), "matzono_mul_matrix");
  std::vector<Mat> gens;
  gens.reserve(M.generators().size());
  for (const auto& Gi : M.generators()) gens.emplace_back(Gi * P);
  return MatrixZonotope(M.center() * P, std::move(gens));
}

/// Minkowski sum of matrix zonotopes: centers add, generator lists concatenate.
inline MatrixZonotope minkowski_sum(const MatrixZonotope& a, const MatrixZonotope& b)
{
  detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "minkowski_sum: matrix shape mismatch");
  std::vector<Mat> gens = a.generators();
  gens.insert(gens.end(), b.generators().begin(), b.generators().end());
  return MatrixZonotope(a.center() + b.center(), std::move(gens));
}

/// a + (-1) b.
inline MatrixZonotope minkowski_subtract(const MatrixZonotope& a, const MatrixZonotope& b)
{
  detail::require(a.rows() == b.rows() && a.cols() == b.cols(),
                  "minkowski_subtract: matrix shape mismatch");
  std::vector<Mat> gens = a.generators();
  gens.reserve(gens.size() + b.generators().size());
  for (const auto& g : b.generators()) gens.emplace_back(-g);
  return MatrixZonotope(a.center() - b.center(), std::move(gens));
}

/// Elementwise bounds: C -/+ sum_i |G_i|.
inline IntervalMatrix interval_hull(const MatrixZonotope& M)
{
  Mat r = Mat::Zero(M.rows(), M.cols());
  for (const auto& g : M.generators()) r += g.cwiseAbs();
  return IntervalMatrix{M.center() - r, M.center() + r};
}

/**
 * @brief Box-method order reduction.
 *
 * Keeps the (max_generators - n) generators with the largest l2 norm and
 * replaces the rest by the n axis-aligned generators of their interval hull.
 * The result contains Z, has at most max_generators generators and the same
 * interval hull as Z. Ties in the norm ordering are broken by column index.
 */
inline Zonotope reduce_order(const Zonotope& Z, Index max_generators)
{
  const Index n = Z.dim();
  if (max_generators < n) {
    throw std::invalid_argument("reduce_order: max_generators (" + std::to_string(max_generators) +
                                ") below dimension (" + std::to_string(n) + ")");
  }
  const Index gamma = Z.num_generators();
  if (gamma <= max_generators) return Z;

  const Mat& G = Z.generators();
  std::vector<Index> order(static_cast<size_t>(gamma));
  std::iota(order.begin(), order.end(), Index{0});
  const Vec norms = G.colwise().norm().transpose();
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return norms(a) > norms(b); });

  const Index keep = max_generators - n;
  Mat R(n, keep + n);
  Vec box = Vec::Zero(n);
  for (Index k = 0; k < gamma; ++k) {
    const Index j = order[static_cast<size_t>(k)];
    if (k < keep) {
      R.col(k) = G.col(j);
    } else {
      box += G.col(j).cwiseAbs();
    }
  }
  R.rightCols(n) = box.asDiagonal();
  return Zonotope(Z.center(), std::move(R));
}

}  // namespace ddsafe

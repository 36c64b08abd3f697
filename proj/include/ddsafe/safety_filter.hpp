#pragma once

/**
 * @file safety_filter.hpp
 * @brief Data-driven predictive safety filter.
 *
 * Given the action proposed by the agent, finds the closest first input u_0
 * such that the plan [u_0, brake, brake, ...] has all its data-driven reach
 * sets inside an obstacle-free box and comes to a nominal stop. The braking
 * inputs follow a saturated velocity-opposing law evaluated on the predicted
 * set centers, so every returned plan ends in a failsafe braking suffix.
 *
 * State layout convention: the first d coordinates of the state are the
 * position (d = workspace dimension); velocities are located through
 * FilterConfig::velocity_indices.
 */

#include "ddsafe/reachability.hpp"
#include "ddsafe/set_algebra.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ddsafe {

/// Thrown when the current state leaves no obstacle-free box to plan in.
class InfeasibleStart : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// Static axis-aligned obstacle in position coordinates.
struct Obstacle
{
  IntervalBox region;
};

/// One admissible box per horizon step, in full state coordinates.
struct SafeRegionSchedule
{
  std::vector<IntervalBox> boxes;

  Index horizon() const { return static_cast<Index>(boxes.size()); }
};

struct Plan
{
  std::vector<Vec> inputs;
  std::vector<Zonotope> reach_sets;
  long created_at = 0;

  Index horizon() const { return static_cast<Index>(inputs.size()); }
};

struct FilterConfig
{
  Index n_plan = 10;
  /// Steps the braking law needs to stop from the maximum speed.
  Index n_brake = 6;
  IntervalBox u_box;
  /// Constant part of the braking action.
  Vec u_brk;
  /// Velocity feedback gain of the braking law (1/dt gives deadbeat braking).
  double brake_gain = 10.0;
  /// State index of the velocity driven by each input channel.
  std::vector<Index> velocity_indices;
  double solver_tol = 1e-6;
  double time_limit_ms = 250.0;
  /// Weight of the adjustment penalty fed back to the agent.
  double adjustment_penalty_weight = 1.0;
  /// Generator cap of reach sets; 0 selects 5 n.
  Index max_generators = 0;
  /// Bound on the nominal speed per velocity coordinate at the end of the plan.
  double stop_tolerance = 1e-3;
  /// Clearance added on top of the measurement-noise radius when inflating obstacles.
  double safety_margin = 0.01;
  Index max_solver_iterations = 30;
  /// Points per input axis of the coarse grid that seeds the solver.
  Index anchor_levels = 9;
  /// Number of seeds refined to convergence.
  Index solver_starts = 3;

  Index input_dim() const { return u_box.dim(); }

  void validate() const
  {
    detail::require(n_plan > n_brake, "FilterConfig: n_plan must exceed n_brake");
    detail::require(n_brake >= 0, "FilterConfig: n_brake must be non-negative");
    detail::require(u_box.dim() > 0 && u_box.is_bounded(), "FilterConfig: u_box must be bounded and non-empty");
    detail::require(u_brk.size() == u_box.dim(), "FilterConfig: u_brk dimension differs from u_box");
    detail::require(u_box.contains(u_brk), "FilterConfig: u_brk outside u_box");
    detail::require(static_cast<Index>(velocity_indices.size()) == u_box.dim(),
                    "FilterConfig: one velocity index per input channel required");
    detail::require(time_limit_ms > 0.0, "FilterConfig: time_limit must be positive");
    detail::require(solver_tol > 0.0, "FilterConfig: solver_tol must be positive");
    detail::require(anchor_levels >= 2 && solver_starts >= 1, "FilterConfig: solver needs a grid and a start");
    detail::require(adjustment_penalty_weight >= 0.0, "FilterConfig: negative adjustment penalty weight");
    detail::require(stop_tolerance >= 0.0 && safety_margin >= 0.0, "FilterConfig: negative tolerance");
  }

  /// clamp(u_brk - brake_gain * v, u_box) with v the velocity part of `state`.
  Vec braking_action(const Vec& state) const
  {
    Vec u = u_brk;
    for (size_t i = 0; i < velocity_indices.size(); ++i) {
      u(static_cast<Index>(i)) -= brake_gain * state(velocity_indices[i]);
    }
    return u_box.clamp(u);
  }
};

// ---------------------------------------------------------------------------
// Free space
// ---------------------------------------------------------------------------

namespace detail {

/// Open overlap of [a_lo, a_hi] and [b_lo, b_hi]; touching intervals do not overlap.
inline bool open_overlap(double a_lo, double a_hi, double b_lo, double b_hi) { return a_lo < b_hi && b_lo < a_hi; }

/// Degenerate intervals overlap a box if they lie strictly inside it.
inline bool overlaps_except(const Vec& lo, const Vec& hi, const IntervalBox& box, Index skip)
{
  for (Index b = 0; b < lo.size(); ++b) {
    if (b == skip) continue;
    if (lo(b) == hi(b)) {
      if (!(box.lower()(b) < lo(b) && lo(b) < box.upper()(b))) return false;
    } else if (!open_overlap(lo(b), hi(b), box.lower()(b), box.upper()(b))) {
      return false;
    }
  }
  return true;
}

inline IntervalBox lift_position_box(const IntervalBox& pos, Index n)
{
  IntervalBox full = IntervalBox::unbounded(n);
  Vec lo = full.lower();
  Vec hi = full.upper();
  lo.head(pos.dim()) = pos.lower();
  hi.head(pos.dim()) = pos.upper();
  return IntervalBox(std::move(lo), std::move(hi));
}

}  // namespace detail

/**
 * Greedy obstacle-free box around the position part of y.
 *
 * Obstacles are inflated by `inflation` (per position axis). Starting from the
 * degenerate box at y, the faces grow in rounds, visiting axes 0..d-1 and the
 * low face before the high face. Each visit moves a face out by at most
 * `growth_step`; a face stops for good at the workspace boundary or at the
 * face of an inflated obstacle that overlaps the current box in every other
 * axis. Contact with an obstacle face is allowed, interior overlap is not.
 * Growing in small rounds keeps the box from collapsing into a sliver along
 * the last axis. The result is lifted to full state coordinates
 * (non-position coordinates unbounded) and repeated n_plan times.
 */
inline SafeRegionSchedule free_boxes(const Vec& y, const std::vector<Obstacle>& obstacles,
                                     const IntervalBox& workspace, const Vec& inflation, Index n_plan,
                                     double growth_step = 0.05)
{
  const Index d = workspace.dim();
  detail::require(y.size() >= d, "free_boxes: state shorter than workspace dimension");
  detail::require_dims(inflation.size(), d, "free_boxes (inflation)");
  detail::require(growth_step > 0.0, "free_boxes: growth_step must be positive");
  const Vec p = y.head(d);
  if (!workspace.contains(p)) throw InfeasibleStart("infeasible start: position outside workspace");

  std::vector<IntervalBox> inflated;
  inflated.reserve(obstacles.size());
  for (const auto& o : obstacles) {
    detail::require_dims(o.region.dim(), d, "free_boxes (obstacle)");
    inflated.push_back(o.region.inflated(inflation));
    const auto& b = inflated.back();
    bool inside = true;
    for (Index a = 0; a < d; ++a) inside = inside && b.lower()(a) < p(a) && p(a) < b.upper()(a);
    if (inside) throw InfeasibleStart("infeasible start: position inside an inflated obstacle");
  }

  Vec lo = p;
  Vec hi = p;
  // Face (a, side): side 0 is the low face.
  std::vector<bool> done(static_cast<size_t>(2 * d), false);
  auto limit = [&](Index a, bool low) {
    double bound = low ? workspace.lower()(a) : workspace.upper()(a);
    for (const auto& b : inflated) {
      if (!detail::overlaps_except(lo, hi, b, a)) continue;
      if (low && b.upper()(a) <= lo(a)) bound = std::max(bound, b.upper()(a));
      if (!low && b.lower()(a) >= hi(a)) bound = std::min(bound, b.lower()(a));
      if (b.lower()(a) < lo(a) && hi(a) < b.upper()(a)) bound = low ? lo(a) : hi(a);
    }
    return bound;
  };
  for (bool moving = true; moving;) {
    moving = false;
    for (Index a = 0; a < d; ++a) {
      for (int side = 0; side < 2; ++side) {
        const auto f = static_cast<size_t>(2 * a + side);
        if (done[f]) continue;
        const bool low = side == 0;
        const double bound = limit(a, low);
        const double next = low ? std::max(bound, lo(a) - growth_step) : std::min(bound, hi(a) + growth_step);
        (low ? lo(a) : hi(a)) = next;
        done[f] = next == bound;
        moving = moving || !done[f];
      }
    }
  }
  const IntervalBox box = detail::lift_position_box(IntervalBox(lo, hi), y.size());
  return SafeRegionSchedule{std::vector<IntervalBox>(static_cast<size_t>(n_plan), box)};
}

// ---------------------------------------------------------------------------
// Plan evaluation
// ---------------------------------------------------------------------------

/// A candidate plan with its reach sets, before any feasibility decision.
struct CandidatePlan
{
  std::vector<Vec> inputs;
  std::vector<Zonotope> reach_sets;
};

/**
 * Rolls out [first, brake(c_1), ..., brake(c_{N-1})] from `initial`, where c_i is
 * the center of the i-th reach set.
 */
inline CandidatePlan rollout_plan(const Vec& first, const Zonotope& initial, const ModelSet& model,
                                  const NoiseModel& noise, const FilterConfig& cfg, Index horizon)
{
  CandidatePlan c;
  c.inputs.reserve(static_cast<size_t>(horizon));
  c.reach_sets.reserve(static_cast<size_t>(horizon));
  const Zonotope* cur = &initial;
  for (Index i = 0; i < horizon; ++i) {
    c.inputs.push_back(i == 0 ? first : cfg.braking_action(cur->center()));
    c.reach_sets.push_back(reach_step(model, *cur, Zonotope(c.inputs.back()), noise, cfg.max_generators));
    cur = &c.reach_sets.back();
  }
  return c;
}

/**
 * Constraint values g <= 0 of a candidate: for every step and every bounded
 * schedule face, hull bound minus face (upper) or face minus hull bound
 * (lower); then |nominal terminal velocity| - stop_tolerance as two rows per
 * velocity coordinate. The layout depends only on the schedule.
 */
inline Vec plan_constraints(const CandidatePlan& c, const SafeRegionSchedule& schedule, const FilterConfig& cfg)
{
  std::vector<double> g;
  for (size_t t = 0; t < c.reach_sets.size(); ++t) {
    const IntervalBox hull = interval_hull(c.reach_sets[t]);
    const IntervalBox& box = schedule.boxes[t];
    for (Index i = 0; i < box.dim(); ++i) {
      if (std::isfinite(box.upper()(i))) g.push_back(hull.upper()(i) - box.upper()(i));
      if (std::isfinite(box.lower()(i))) g.push_back(box.lower()(i) - hull.lower()(i));
    }
  }
  if (!c.reach_sets.empty()) {
    const Vec& terminal = c.reach_sets.back().center();
    for (Index j : cfg.velocity_indices) {
      g.push_back(terminal(j) - cfg.stop_tolerance);
      g.push_back(-terminal(j) - cfg.stop_tolerance);
    }
  }
  return Eigen::Map<Vec>(g.data(), static_cast<Index>(g.size()));
}

/// Exact interval re-check of a candidate against its schedule.
inline bool verify_plan(const CandidatePlan& c, const SafeRegionSchedule& schedule, const FilterConfig& cfg)
{
  if (c.reach_sets.size() != schedule.boxes.size() || c.inputs.size() != c.reach_sets.size()) return false;
  for (size_t t = 0; t < c.reach_sets.size(); ++t) {
    if (!cfg.u_box.contains(c.inputs[t])) return false;
    if (!box_contains(schedule.boxes[t], c.reach_sets[t])) return false;
  }
  if (!c.reach_sets.empty()) {
    const Vec& terminal = c.reach_sets.back().center();
    for (Index j : cfg.velocity_indices) {
      if (std::abs(terminal(j)) > cfg.stop_tolerance) return false;
    }
  }
  return true;
}

namespace detail {

/**
 * Hildreth's dual coordinate ascent for min 0.5 ||u - r||^2 s.t. A u <= b.
 * Returns the primal iterate; if the constraints are inconsistent the iterate
 * after the sweep budget is returned unchanged and may be infeasible.
 */
inline Vec hildreth_projection(const Vec& r, const Mat& A, const Vec& b, int max_sweeps = 500, double tol = 1e-13)
{
  const Index k = A.rows();
  Vec lambda = Vec::Zero(k);
  Vec u = r;
  const Vec row_norm2 = A.rowwise().squaredNorm();
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double change = 0.0;
    for (Index i = 0; i < k; ++i) {
      if (row_norm2(i) <= 0.0) continue;
      const double viol = A.row(i).dot(u) - b(i);
      const double next = std::max(0.0, lambda(i) + viol / row_norm2(i));
      const double delta = next - lambda(i);
      if (delta != 0.0) {
        u -= delta * A.row(i).transpose();
        lambda(i) = next;
        change = std::max(change, std::abs(delta) * std::sqrt(row_norm2(i)));
      }
    }
    if (change < tol) break;
  }
  return u;
}

class Deadline
{
public:
  explicit Deadline(double ms)
      : end_(std::chrono::steady_clock::now() +
             std::chrono::duration_cast<std::chrono::steady_clock::duration>(std::chrono::duration<double, std::milli>(ms)))
  {}
  bool expired() const { return std::chrono::steady_clock::now() > end_; }

private:
  std::chrono::steady_clock::time_point end_;
};

struct TimeLimitExceeded
{};

/// Feasible-path optimizer over the first input; see solve_ddpc.
class FirstInputSolver
{
public:
  FirstInputSolver(const Zonotope& initial, const SafeRegionSchedule& schedule, const ModelSet& model,
                   const NoiseModel& noise, const FilterConfig& cfg)
      : initial_(initial), schedule_(schedule), model_(model), noise_(noise), cfg_(cfg),
        deadline_(cfg.time_limit_ms)
  {}

  struct Eval
  {
    Vec u;
    CandidatePlan plan;
    Vec g;
    bool feasible = false;
  };

  Eval evaluate(const Vec& u)
  {
    if (deadline_.expired()) throw TimeLimitExceeded{};
    Eval e{u, rollout_plan(u, initial_, model_, noise_, cfg_, schedule_.horizon()), Vec(), false};
    e.g = plan_constraints(e.plan, schedule_, cfg_);
    e.feasible = e.g.size() == 0 || e.g.maxCoeff() <= 0.0;
    return e;
  }

  /// Largest t in [0, 1] with from + t (to - from) feasible; `from` must be feasible.
  Eval bisect(const Eval& from, const Vec& to) { return bisect(from, to, cfg_.solver_tol); }

  Eval bisect(const Eval& from, const Vec& to, double tol)
  {
    const Vec dir = to - from.u;
    const double len = dir.norm();
    Eval best = from;
    if (len == 0.0) return best;
    double lo = 0.0;
    double hi = 1.0;
    for (int it = 0; it < 64 && (hi - lo) * len > tol; ++it) {
      const double mid = 0.5 * (lo + hi);
      Eval e = evaluate(from.u + mid * dir);
      if (e.feasible) {
        lo = mid;
        best = std::move(e);
      } else {
        hi = mid;
      }
    }
    return best;
  }

  Mat jacobian(const Eval& at)
  {
    const Index m = at.u.size();
    Mat J(at.g.size(), m);
    const Vec width = cfg_.u_box.upper() - cfg_.u_box.lower();
    for (Index j = 0; j < m; ++j) {
      const double h = 1e-7 * std::max(1.0, width(j));
      Vec u = at.u;
      // Step inward so the probe stays in u_box.
      const double step = (u(j) + h <= cfg_.u_box.upper()(j)) ? h : -h;
      u(j) += step;
      const Eval e = evaluate(u);
      J.col(j) = (e.g - at.g) / step;
    }
    return J;
  }

  std::optional<Eval> solve(const Vec& reference)
  {
    const Vec r = cfg_.u_box.clamp(reference);
    Eval at_ref = evaluate(r);
    if (at_ref.feasible) return at_ref;

    // Rank the anchors by distance, pull the closest ones toward r coarsely and refine the best of those.
    const auto dist = [&](const Eval& e) { return (e.u - r).squaredNorm(); };
    const auto closer = [&](const Eval& a, const Eval& b) { return dist(a) < dist(b); };
    std::vector<Eval> starts = anchors();
    if (starts.empty()) return std::nullopt;
    std::stable_sort(starts.begin(), starts.end(), closer);
    starts.resize(std::min<size_t>(starts.size(), 3 * static_cast<size_t>(cfg_.solver_starts)));
    const double coarse = 1e-2 * (cfg_.u_box.upper() - cfg_.u_box.lower()).maxCoeff();
    for (Eval& s : starts) s = bisect(s, r, coarse);
    std::stable_sort(starts.begin(), starts.end(), closer);
    starts.resize(std::min<size_t>(starts.size(), static_cast<size_t>(cfg_.solver_starts)));

    // Linearized steps from every start; the slower alternation with compass search only from the best.
    std::optional<Eval> best;
    for (Eval& s : starts) {
      Eval e = linearized_steps(std::move(s), r, coarse);
      if (!best || dist(e) < dist(*best)) best = std::move(e);
    }
    return refine(std::move(*best), r);
  }

private:
  /// Alternates linearized projection steps with a compass search until neither improves.
  Eval refine(Eval cur, const Vec& r)
  {
    for (Index it = 0; it < cfg_.max_solver_iterations; ++it) {
      const double before = (cur.u - r).norm();
      cur = linearized_steps(std::move(cur), r);
      cur = compass_search(std::move(cur), r);
      if (before - (cur.u - r).norm() <= cfg_.solver_tol) break;
    }
    return cur;
  }

  Eval linearized_steps(Eval cur, const Vec& r) { return linearized_steps(std::move(cur), r, cfg_.solver_tol); }

  Eval linearized_steps(Eval cur, const Vec& r, double tol)
  {
    const Index m = r.size();
    Mat box_rows(2 * m, m);
    box_rows << Mat::Identity(m, m), -Mat::Identity(m, m);
    Vec box_rhs(2 * m);
    box_rhs << cfg_.u_box.upper(), -cfg_.u_box.lower();

    for (Index it = 0; it < cfg_.max_solver_iterations; ++it) {
      const Mat J = jacobian(cur);
      Mat A(J.rows() + 2 * m, m);
      A << J, box_rows;
      Vec b(J.rows() + 2 * m);
      b << J * cur.u - cur.g, box_rhs;
      const Vec q = cfg_.u_box.clamp(hildreth_projection(r, A, b));
      if ((q - cur.u).norm() <= tol) break;
      Eval cand = evaluate(q);
      const double before = (cur.u - r).norm();
      if (!cand.feasible) cand = bisect(cur, q, tol);
      const double after = (cand.u - r).norm();
      if (!(after < before)) break;
      cur = std::move(cand);
      if (before - after <= tol) break;
    }
    return cur;
  }

  /// Feasible moves along the axes, the diagonals and toward r, halving the step on failure.
  /// The constraints are only piecewise smooth, so this catches kinks the linearization stalls on.
  Eval compass_search(Eval cur, const Vec& r)
  {
    const Index m = r.size();
    std::vector<Vec> dirs;
    for (Index i = 0; i < m; ++i) {
      dirs.push_back(Vec::Unit(m, i));
      dirs.push_back(-Vec::Unit(m, i));
      for (Index j = i + 1; j < m; ++j) {
        for (double si : {1.0, -1.0}) {
          for (double sj : {1.0, -1.0}) dirs.push_back((si * Vec::Unit(m, i) + sj * Vec::Unit(m, j)) / std::sqrt(2.0));
        }
      }
    }
    const double width = (cfg_.u_box.upper() - cfg_.u_box.lower()).maxCoeff();
    const double floor = std::max(cfg_.solver_tol, 1e-4 * width);
    // Longer moves than twice the distance to r cannot get closer.
    for (double h = std::min(0.125 * width, 2.0 * (cur.u - r).norm()); h > floor;) {
      const double now = (cur.u - r).norm();
      if (now <= cfg_.solver_tol) break;
      bool moved = false;
      const Vec to_r = (r - cur.u) / now;
      for (size_t k = 0; k <= dirs.size() && !moved; ++k) {
        const Vec& d = k == 0 ? to_r : dirs[k - 1];
        const Vec u = cfg_.u_box.clamp(cur.u + h * d);
        if ((u - r).norm() >= now) continue;
        Eval e = evaluate(u);
        if (e.feasible) {
          cur = std::move(e);
          moved = true;
        }
      }
      h *= moved ? 2.0 : 0.5;
    }
    return cur;
  }

  /// Feasible seeds: the braking action and every feasible point of a coarse grid over u_box.
  std::vector<Eval> anchors()
  {
    std::vector<Eval> out;
    Eval brake = evaluate(cfg_.braking_action(initial_.center()));
    if (brake.feasible) out.push_back(std::move(brake));
    const Index m = cfg_.input_dim();
    const Index levels = cfg_.anchor_levels;
    Index total = 1;
    for (Index j = 0; j < m; ++j) total *= levels;
    for (Index code = 0; code < total; ++code) {
      Vec u(m);
      Index rest = code;
      for (Index j = 0; j < m; ++j) {
        const double frac = static_cast<double>(rest % levels) / static_cast<double>(levels - 1);
        rest /= levels;
        u(j) = cfg_.u_box.lower()(j) + frac * (cfg_.u_box.upper()(j) - cfg_.u_box.lower()(j));
      }
      Eval e = evaluate(u);
      if (e.feasible) out.push_back(std::move(e));
    }
    return out;
  }

  const Zonotope& initial_;
  const SafeRegionSchedule& schedule_;
  const ModelSet& model_;
  const NoiseModel& noise_;
  const FilterConfig& cfg_;
  Deadline deadline_;
};

inline Vec position_radius(const Zonotope& Zv, Index d)
{
  const IntervalBox hull = interval_hull(Zv);
  return hull.lower().head(d).cwiseAbs().cwiseMax(hull.upper().head(d).cwiseAbs());
}

inline Mat position_selector(Index d, Index n)
{
  Mat S = Mat::Zero(d, n);
  S.leftCols(d).setIdentity();
  return S;
}

}  // namespace detail

/**
 * @brief Closest safe first input to `reference`.
 *
 * Minimizes ||u_0 - clamp(reference)||^2 over u_0 in u_box subject to every
 * reach set of rollout_plan(u_0) lying in its schedule box and the nominal
 * terminal velocity being within stop_tolerance. If the reference itself is
 * feasible it is returned unchanged. Otherwise feasible anchors (the braking
 * action and the feasible points of a coarse grid) are moved toward the
 * reference by bisection, and the closest few are refined by sequential
 * linearization: the constraints are linearized by finite differences, the
 * reference is projected onto the linearized set with Hildreth's method, and
 * a bisection line search keeps every iterate feasible. A compass search
 * alternates with these steps to get past kinks of the piecewise smooth
 * constraints. The best refined point is re-verified before it is returned.
 *
 * Returns nothing when no feasible input is found or the time limit expires.
 */
inline std::optional<CandidatePlan> solve_ddpc(const Vec& reference, const Zonotope& initial,
                                               const SafeRegionSchedule& schedule, const ModelSet& model,
                                               const NoiseModel& noise, const FilterConfig& cfg)
{
  cfg.validate();
  detail::require_dims(reference.size(), cfg.input_dim(), "solve_ddpc (reference)");
  detail::require_dims(initial.dim(), model.state_dim(), "solve_ddpc (state)");
  detail::require(schedule.horizon() == cfg.n_plan, "solve_ddpc: schedule length differs from n_plan");
  try {
    detail::FirstInputSolver solver(initial, schedule, model, noise, cfg);
    auto sol = solver.solve(reference);
    if (!sol || !verify_plan(sol->plan, schedule, cfg)) return std::nullopt;
    return std::move(sol->plan);
  } catch (const detail::TimeLimitExceeded&) {
    return std::nullopt;
  }
}

/// Overload planning from the measured state y, i.e. from <y, 0>.
inline std::optional<CandidatePlan> solve_ddpc(const Vec& reference, const Vec& y, const SafeRegionSchedule& schedule,
                                               const ModelSet& model, const NoiseModel& noise, const FilterConfig& cfg)
{
  return solve_ddpc(reference, Zonotope(y), schedule, model, noise, cfg);
}

/// The pure braking plan from y, if it verifies against the schedule.
inline std::optional<Plan> braking_plan(const Vec& y, const ModelSet& model, const NoiseModel& noise,
                                        const SafeRegionSchedule& schedule, const FilterConfig& cfg)
{
  cfg.validate();
  CandidatePlan c = rollout_plan(cfg.braking_action(y), Zonotope(y), model, noise, cfg, schedule.horizon());
  if (schedule.horizon() != cfg.n_plan || !verify_plan(c, schedule, cfg)) return std::nullopt;
  return Plan{std::move(c.inputs), std::move(c.reach_sets), 0};
}

/// Obstacle inflation used for the free boxes: position radius of Zv plus the safety margin.
inline Vec obstacle_inflation(const NoiseModel& noise, Index d, const FilterConfig& cfg)
{
  return detail::position_radius(noise.measurement, d).array() + cfg.safety_margin;
}

/**
 * @brief Full safety layer for one decision step.
 *
 * free_boxes -> solve_ddpc -> final check that no reach set may intersect an
 * obstacle inflated by the measurement-noise radius or leave the workspace
 * shrunk by that radius. The free box itself is built with the larger
 * inflation (radius + safety_margin) inside the workspace shrunk by the same
 * amount. Throws InfeasibleStart when y leaves no room for a box.
 */
inline std::optional<Plan> enforce_safety(const Zonotope& R_k, const Vec& u_rl, const Vec& y,
                                          const std::vector<Obstacle>& obstacles, const IntervalBox& workspace,
                                          const ModelSet& model, const NoiseModel& noise, const FilterConfig& cfg,
                                          long step_index = 0)
{
  const Index d = workspace.dim();
  const Vec radius = detail::position_radius(noise.measurement, d);
  const Vec inflation = radius.array() + cfg.safety_margin;
  IntervalBox usable;
  try {
    usable = workspace.deflated(inflation);
  } catch (const std::invalid_argument&) {
    throw InfeasibleStart("infeasible start: workspace smaller than the obstacle inflation");
  }
  const SafeRegionSchedule schedule = free_boxes(y, obstacles, usable, inflation, cfg.n_plan);

  auto sol = solve_ddpc(u_rl, R_k, schedule, model, noise, cfg);
  if (!sol) return std::nullopt;

  const Mat S = detail::position_selector(d, y.size());
  const IntervalBox walls = workspace.deflated(radius);
  for (const auto& R : sol->reach_sets) {
    const Zonotope pos = linear_map(S, R);
    if (!walls.contains(interval_hull(pos))) return std::nullopt;
    for (const auto& o : obstacles) {
      if (may_intersect(pos, Zonotope::from_box(o.region.inflated(radius)))) return std::nullopt;
    }
  }
  return Plan{std::move(sol->inputs), std::move(sol->reach_sets), step_index};
}

/// True iff the plan's first input differs from u_rl by more than tol (Euclidean).
inline bool was_adjusted(const Plan& plan, const Vec& u_rl, double tol)
{
  detail::require(!plan.inputs.empty(), "was_adjusted: empty plan");
  return (plan.inputs.front() - u_rl).norm() > tol;
}

}  // namespace ddsafe

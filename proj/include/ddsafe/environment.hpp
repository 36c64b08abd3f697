#pragma once

/**
 * @file environment.hpp
 * @brief Planar navigation world: a damped double integrator with bounded
 * process and measurement noise, static box obstacles, a goal, and range rays.
 */

#include "ddsafe/reachability.hpp"
#include "ddsafe/safety_filter.hpp"
#include "ddsafe/set_algebra.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <tuple>
#include <stdexcept>
#include <utility>
#include <vector>

namespace ddsafe {

class WorldTooCluttered : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// SplitMix64 finalizer; derives independent stream seeds from (seed, index).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index)
{
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Uniform sample c + G b, b uniform in [-1, 1]^gamma.
template <class Rng>
Vec sample_zonotope(const Zonotope& Z, Rng& rng)
{
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  Vec b(Z.num_generators());
  for (Index i = 0; i < b.size(); ++i) b(i) = unit(rng);
  return Z.point_at(b);
}

template <class Rng>
Vec sample_box(const IntervalBox& box, Rng& rng)
{
  Vec p(box.dim());
  for (Index i = 0; i < p.size(); ++i) {
    std::uniform_real_distribution<double> d(box.lower()(i), box.upper()(i));
    p(i) = box.lower()(i) == box.upper()(i) ? box.lower()(i) : d(rng);
  }
  return p;
}

struct WorldConfig
{
  IntervalBox workspace = IntervalBox(Vec::Constant(2, -5.0), Vec::Constant(2, 5.0));
  Index n_obstacles = 8;
  double obstacle_size_min = 0.5;
  double obstacle_size_max = 1.5;
  double goal_radius = 0.3;
  double dt = 0.1;
  double damping = 0.05;
  IntervalBox u_box = IntervalBox(Vec::Constant(2, -2.0), Vec::Constant(2, 2.0));
  NoiseModel noise = default_noise();
  Index n_rays = 18;
  double ray_max_range = 5.0;
  Index max_steps = 150;
  /// Minimum distance between the start position and any obstacle or wall.
  double start_clearance = 0.5;
  std::uint64_t seed = 1;

  static NoiseModel default_noise()
  {
    Vec w(4);
    w << 5e-4, 5e-4, 1e-3, 1e-3;
    const Vec v = Vec::Constant(4, 1e-3);
    return NoiseModel::from_norm_bound(Zonotope::from_box(IntervalBox::from_center(Vec::Zero(4), w)),
                                       Zonotope::from_box(IntervalBox::from_center(Vec::Zero(4), v)), 1.2);
  }

  void validate() const
  {
    detail::require(workspace.dim() == 2 && workspace.is_bounded(), "WorldConfig: workspace must be a bounded 2-D box");
    detail::require(dt > 0.0, "WorldConfig: dt must be positive");
    detail::require(goal_radius > 0.0, "WorldConfig: goal_radius must be positive");
    detail::require(damping >= 0.0 && damping < 1.0, "WorldConfig: damping must lie in [0, 1)");
    detail::require(u_box.dim() == 2 && u_box.is_bounded(), "WorldConfig: u_box must be a bounded 2-D box");
    detail::require(n_rays >= 0 && ray_max_range > 0.0, "WorldConfig: invalid ray settings");
    detail::require(obstacle_size_min > 0.0 && obstacle_size_min <= obstacle_size_max,
                    "WorldConfig: invalid obstacle size range");
    detail::require(max_steps > 0, "WorldConfig: max_steps must be positive");
    noise.validate();
    detail::require(noise.dim() == 4, "WorldConfig: noise must be 4-dimensional");
  }
};

/// x(t+1) = A x + B u + w for state [px, py, vx, vy] and input [ax, ay].
inline std::pair<Mat, Mat> double_integrator(double dt, double damping)
{
  Mat A = Mat::Identity(4, 4);
  A(0, 2) = dt;
  A(1, 3) = dt;
  A(2, 2) = 1.0 - damping;
  A(3, 3) = 1.0 - damping;
  Mat B = Mat::Zero(4, 2);
  B(2, 0) = dt;
  B(3, 1) = dt;
  return {A, B};
}

/// True state x (hidden from the agent) and its measurement y = x + v.
struct RobotState
{
  Vec x;
  Vec y;
};

/// [measured state (4), goal - measured position (2), ray distances (n_rays)].
struct AgentObservation
{
  Vec values;

  Index size() const { return values.size(); }
  Vec state() const { return values.head(4); }
  Vec goal_offset() const { return values.segment(4, 2); }
  Vec rays() const { return values.tail(values.size() - 6); }
};

struct StepEvents
{
  bool collision = false;
  bool goal_reached = false;
  bool clamped = false;
};

/// Collision: closed containment of the position in an obstacle, or leaving the closed workspace.
inline bool in_collision(const Vec& pos, const std::vector<Obstacle>& obstacles, const IntervalBox& workspace)
{
  if (!workspace.contains(pos)) return true;
  for (const auto& o : obstacles) {
    if (o.region.contains(pos)) return true;
  }
  return false;
}

/// Distance from `origin` along unit `dir` to the boundary of `box` (origin outside), or +inf on a miss.
inline double ray_box_entry(const Vec& origin, const Vec& dir, const IntervalBox& box)
{
  double t0 = 0.0;
  double t1 = std::numeric_limits<double>::infinity();
  for (Index i = 0; i < origin.size(); ++i) {
    if (dir(i) == 0.0) {
      if (origin(i) < box.lower()(i) || origin(i) > box.upper()(i)) return std::numeric_limits<double>::infinity();
      continue;
    }
    double a = (box.lower()(i) - origin(i)) / dir(i);
    double b = (box.upper()(i) - origin(i)) / dir(i);
    if (a > b) std::swap(a, b);
    t0 = std::max(t0, a);
    t1 = std::min(t1, b);
    if (t0 > t1) return std::numeric_limits<double>::infinity();
  }
  return t0;
}

/// Distance from `origin` (inside) along unit `dir` to the boundary of `box`.
inline double ray_box_exit(const Vec& origin, const Vec& dir, const IntervalBox& box)
{
  double t = std::numeric_limits<double>::infinity();
  for (Index i = 0; i < origin.size(); ++i) {
    if (dir(i) > 0.0) t = std::min(t, (box.upper()(i) - origin(i)) / dir(i));
    if (dir(i) < 0.0) t = std::min(t, (box.lower()(i) - origin(i)) / dir(i));
  }
  return std::max(0.0, t);
}

/**
 * Rays from the measured position, evenly spanning 180 degrees centered on the
 * bearing to the goal (a single ray points at the goal). Each ray returns the
 * distance to the nearest obstacle or wall, capped at ray_max_range.
 */
inline Vec cast_rays(const Vec& pos, const Vec& goal, const std::vector<Obstacle>& obstacles, const WorldConfig& cfg)
{
  Vec out(cfg.n_rays);
  const Vec to_goal = goal - pos;
  const double heading = to_goal.norm() > 0.0 ? std::atan2(to_goal(1), to_goal(0)) : 0.0;
  for (Index i = 0; i < cfg.n_rays; ++i) {
    const double offset =
        cfg.n_rays == 1 ? 0.0 : -0.5 * std::numbers::pi + std::numbers::pi * static_cast<double>(i) / (cfg.n_rays - 1);
    Vec dir(2);
    dir << std::cos(heading + offset), std::sin(heading + offset);
    double d = cfg.workspace.contains(pos) ? ray_box_exit(pos, dir, cfg.workspace) : 0.0;
    for (const auto& o : obstacles) {
      if (o.region.contains(pos)) {
        d = 0.0;
        break;
      }
      d = std::min(d, ray_box_entry(pos, dir, o.region));
    }
    out(i) = std::min(d, cfg.ray_max_range);
  }
  return out;
}

/**
 * @brief One navigation episode. Deterministic given the config and episode seed.
 *
 * The world owns its noise generator; a single instance must not be shared
 * between threads.
 */
class World
{
public:
  explicit World(WorldConfig cfg) : cfg_(std::move(cfg))
  {
    cfg_.validate();
    std::tie(A_, B_) = double_integrator(cfg_.dt, cfg_.damping);
  }

  const WorldConfig& config() const { return cfg_; }
  const Mat& A() const { return A_; }
  const Mat& B() const { return B_; }
  const RobotState& state() const { return state_; }
  const std::vector<Obstacle>& obstacles() const { return obstacles_; }
  const Vec& goal() const { return goal_; }
  Index observation_size() const { return 6 + cfg_.n_rays; }

  /**
   * Samples obstacles, goal and start by rejection: the goal lies outside
   * every obstacle, the start keeps start_clearance from obstacles and walls.
   * The robot starts at rest. Throws WorldTooCluttered after 10^4 rejected draws.
   */
  AgentObservation reset(std::uint64_t episode_seed)
  {
    rng_.seed(mix_seed(cfg_.seed, episode_seed));
    obstacles_.clear();
    const IntervalBox& ws = cfg_.workspace;
    std::uniform_real_distribution<double> size(cfg_.obstacle_size_min, cfg_.obstacle_size_max);
    int draws = 0;
    auto budget = [&draws] {
      if (++draws > 10000) throw WorldTooCluttered("world too cluttered: rejection sampling exhausted 10^4 draws");
    };

    for (Index i = 0; i < cfg_.n_obstacles; ++i) {
      const Vec c = sample_box(ws, rng_);
      Vec half(2);
      half << 0.5 * size(rng_), 0.5 * size(rng_);
      obstacles_.push_back(Obstacle{IntervalBox::from_center(c, half)});
    }

    const Vec clearance = Vec::Constant(2, cfg_.start_clearance);
    const IntervalBox start_region = ws.deflated(clearance);
    Vec start;
    for (;;) {
      budget();
      start = sample_box(start_region, rng_);
      bool ok = true;
      for (const auto& o : obstacles_) ok = ok && !o.region.inflated(clearance).contains(start);
      if (ok) break;
    }
    for (;;) {
      budget();
      goal_ = sample_box(ws.deflated(Vec::Constant(2, cfg_.goal_radius)), rng_);
      bool ok = (goal_ - start).norm() > cfg_.goal_radius;
      for (const auto& o : obstacles_) ok = ok && !o.region.contains(goal_);
      if (ok) break;
    }

    Vec x = Vec::Zero(4);
    x.head(2) = start;
    state_ = RobotState{x, x + sample_zonotope(cfg_.noise.measurement, rng_)};
    steps_ = 0;
    return observe();
  }

  AgentObservation observe() const
  {
    AgentObservation o{Vec(observation_size())};
    o.values.head(4) = state_.y;
    o.values.segment(4, 2) = goal_ - state_.y.head(2);
    o.values.tail(cfg_.n_rays) = cast_rays(state_.y.head(2), goal_, obstacles_, cfg_);
    return o;
  }

  struct StepResult
  {
    AgentObservation observation;
    StepEvents events;
  };

  /// x' = A x + B u + w, y' = x' + v'. Inputs outside u_box are clamped and flagged.
  StepResult step(const Vec& u)
  {
    detail::require_dims(u.size(), 2, "World::step");
    StepEvents ev;
    const Vec uc = cfg_.u_box.clamp(u);
    ev.clamped = uc != u;
    const Vec x = A_ * state_.x + B_ * uc + sample_zonotope(cfg_.noise.process, rng_);
    state_ = RobotState{x, x + sample_zonotope(cfg_.noise.measurement, rng_)};
    ++steps_;
    ev.collision = in_collision(x.head(2), obstacles_, cfg_.workspace);
    ev.goal_reached = (x.head(2) - goal_).norm() <= cfg_.goal_radius;
    return StepResult{observe(), ev};
  }

  /// Test hook: place the robot at a given true state with an explicit measurement.
  void set_state(RobotState s) { state_ = std::move(s); }
  void set_layout(std::vector<Obstacle> obstacles, Vec goal)
  {
    obstacles_ = std::move(obstacles);
    goal_ = std::move(goal);
  }

private:
  WorldConfig cfg_;
  Mat A_;
  Mat B_;
  std::mt19937_64 rng_{1};
  std::vector<Obstacle> obstacles_;
  Vec goal_ = Vec::Zero(2);
  RobotState state_{Vec::Zero(4), Vec::Zero(4)};
  Index steps_ = 0;
};

/**
 * q trajectories of length T in an obstacle-free copy of the world. Each starts
 * at a uniform position in the workspace with velocity uniform in [-1, 1]^2
 * and is driven by inputs uniform in u_box. Returns measured states.
 */
inline TrajectorySet collect_offline_data(const WorldConfig& cfg, Index q, Index T, std::uint64_t excitation_seed)
{
  cfg.validate();
  detail::require(q >= 1 && T >= 1, "collect_offline_data: q and T must be positive");
  const auto [A, B] = double_integrator(cfg.dt, cfg.damping);
  std::mt19937_64 rng(mix_seed(excitation_seed, 0xC011EC7ULL));
  const IntervalBox vel_box(Vec::Constant(2, -1.0), Vec::Constant(2, 1.0));
  TrajectorySet out;
  for (Index k = 0; k < q; ++k) {
    Trajectory tr{Mat(4, T + 1), Mat(2, T)};
    Vec x(4);
    x << sample_box(cfg.workspace, rng), sample_box(vel_box, rng);
    tr.states.col(0) = x + sample_zonotope(cfg.noise.measurement, rng);
    for (Index t = 0; t < T; ++t) {
      const Vec u = sample_box(cfg.u_box, rng);
      x = A * x + B * u + sample_zonotope(cfg.noise.process, rng);
      tr.inputs.col(t) = u;
      tr.states.col(t + 1) = x + sample_zonotope(cfg.noise.measurement, rng);
    }
    out.trajectories.push_back(std::move(tr));
  }
  return out;
}

}  // namespace ddsafe

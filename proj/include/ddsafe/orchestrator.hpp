#pragma once

/**
 * @file orchestrator.hpp
 * @brief Safe RL loop: configuration, training and evaluation episodes,
 * metrics, dataset/trace persistence and trace replay checks.
 */

#include "ddsafe/environment.hpp"
#include "ddsafe/reachability.hpp"
#include "ddsafe/rl_agent.hpp"
#include "ddsafe/safety_filter.hpp"

#include "json.hpp"

#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iomanip>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ddsafe {

using json = nlohmann::json;

class ConfigError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct RewardWeights
{
  double w_dist = 0.1;
  double R_goal = 100.0;
  double R_collide = -100.0;
  double lambda_adjust = 1.0;
};

struct RunPaths
{
  std::string dataset = "dataset.jsonl";
  std::string weights = "weights.bin";
  std::string logs = "logs";
};

struct RunConfig
{
  WorldConfig world;
  FilterConfig filter;
  TD3Config agent;
  /// "td3" or "random".
  std::string agent_kind = "td3";
  /// Cap on training environment steps across all episodes.
  Index n_total = 1000000;
  Index episodes = 100;
  RewardWeights reward;
  std::string mode = "train";
  RunPaths paths;
  std::uint64_t seed = 1;
  /// Offline data: q trajectories of length T.
  Index collect_q = 20;
  Index collect_T = 10;
  /// Disables the safety filter.
  bool baseline = false;
  /// When false, latencies are recorded as 0 so metrics files are byte-reproducible.
  bool measure_latency = true;
  /// Tolerance of the adjusted flag.
  double adjust_tol = 1e-9;

  void validate() const
  {
    world.validate();
    filter.validate();
    agent.validate();
    if (n_total <= 0) throw ConfigError("n_total must be positive");
    if (episodes < 0) throw ConfigError("episodes must be non-negative");
    if (reward.lambda_adjust < 0.0) throw ConfigError("reward.lambda_adjust must be non-negative");
    if (collect_q <= 0 || collect_T <= 0) throw ConfigError("collect.q and collect.T must be positive");
    if (agent_kind != "td3" && agent_kind != "random") throw ConfigError("agent.kind must be td3 or random");
    if (mode != "train" && mode != "eval" && mode != "collect" && mode != "replay") {
      throw ConfigError("mode must be one of train, eval, collect, replay");
    }
  }
};

/// Filter defaults derived from the world: input box, zero braking offset, deadbeat gain.
inline FilterConfig default_filter_config(const WorldConfig& w)
{
  FilterConfig f;
  f.u_box = w.u_box;
  f.u_brk = Vec::Zero(w.u_box.dim());
  f.brake_gain = 1.0 / w.dt;
  f.velocity_indices = {2, 3};
  return f;
}

namespace detail {

inline void reject_unknown(const json& j, std::initializer_list<const char*> keys, const std::string& where)
{
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [k, v] : j.items()) {
    bool known = false;
    for (const char* key : keys) known = known || k == key;
    if (!known) throw ConfigError(where + ": unknown key '" + k + "'");
  }
}

template <class T>
void read_opt(const json& j, const char* key, T& out)
{
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline Vec to_vec(const json& j)
{
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vec>(v.data(), static_cast<Index>(v.size()));
}

inline json from_vec(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline IntervalBox box_from_json(const json& j, const std::string& where)
{
  reject_unknown(j, {"lower", "upper"}, where);
  return IntervalBox(to_vec(j.at("lower")), to_vec(j.at("upper")));
}

inline json box_to_json(const IntervalBox& b) { return {{"lower", from_vec(b.lower())}, {"upper", from_vec(b.upper())}}; }

}  // namespace detail

/**
 * Parses a run configuration. Missing keys keep their defaults; unknown keys
 * are rejected. Filter input box, velocity indices and penalty weight follow
 * the world and reward sections.
 */
inline RunConfig run_config_from_json(const json& j)
{
  using detail::read_opt;
  RunConfig cfg;
  try {
    detail::reject_unknown(j, {"world", "filter", "agent", "n_total", "episodes", "reward", "mode", "paths", "seed",
                               "collect", "baseline", "measure_latency", "adjust_tol"},
                           "config");
    if (j.contains("world")) {
      const json& w = j.at("world");
      detail::reject_unknown(w, {"workspace", "n_obstacles", "obstacle_size", "goal_radius", "dt", "damping", "u_box",
                                 "noise", "n_rays", "ray_max_range", "max_steps", "start_clearance"},
                             "world");
      WorldConfig& wc = cfg.world;
      if (w.contains("workspace")) wc.workspace = detail::box_from_json(w.at("workspace"), "world.workspace");
      read_opt(w, "n_obstacles", wc.n_obstacles);
      if (w.contains("obstacle_size")) {
        const auto s = w.at("obstacle_size").get<std::vector<double>>();
        if (s.size() != 2) throw ConfigError("world.obstacle_size must be [min, max]");
        wc.obstacle_size_min = s[0];
        wc.obstacle_size_max = s[1];
      }
      read_opt(w, "goal_radius", wc.goal_radius);
      read_opt(w, "dt", wc.dt);
      read_opt(w, "damping", wc.damping);
      if (w.contains("u_box")) wc.u_box = detail::box_from_json(w.at("u_box"), "world.u_box");
      if (w.contains("noise")) {
        const json& nj = w.at("noise");
        detail::reject_unknown(nj, {"process", "measurement", "a_bound"}, "world.noise");
        const Vec pw = detail::to_vec(nj.at("process"));
        const Vec mv = detail::to_vec(nj.at("measurement"));
        wc.noise = NoiseModel::from_norm_bound(Zonotope::from_box(IntervalBox::from_center(Vec::Zero(pw.size()), pw)),
                                               Zonotope::from_box(IntervalBox::from_center(Vec::Zero(mv.size()), mv)),
                                               nj.at("a_bound").get<double>());
      }
      read_opt(w, "n_rays", wc.n_rays);
      read_opt(w, "ray_max_range", wc.ray_max_range);
      read_opt(w, "max_steps", wc.max_steps);
      read_opt(w, "start_clearance", wc.start_clearance);
    }
    cfg.filter = default_filter_config(cfg.world);
    if (j.contains("filter")) {
      const json& f = j.at("filter");
      detail::reject_unknown(f, {"n_plan", "n_brake", "u_brk", "brake_gain", "solver_tol", "time_limit_ms",
                                 "max_generators", "stop_tolerance", "safety_margin", "max_solver_iterations",
                                 "anchor_levels", "solver_starts"},
                             "filter");
      FilterConfig& fc = cfg.filter;
      read_opt(f, "n_plan", fc.n_plan);
      read_opt(f, "n_brake", fc.n_brake);
      if (f.contains("u_brk")) fc.u_brk = detail::to_vec(f.at("u_brk"));
      read_opt(f, "brake_gain", fc.brake_gain);
      read_opt(f, "solver_tol", fc.solver_tol);
      read_opt(f, "time_limit_ms", fc.time_limit_ms);
      read_opt(f, "max_generators", fc.max_generators);
      read_opt(f, "stop_tolerance", fc.stop_tolerance);
      read_opt(f, "safety_margin", fc.safety_margin);
      read_opt(f, "max_solver_iterations", fc.max_solver_iterations);
      read_opt(f, "anchor_levels", fc.anchor_levels);
      read_opt(f, "solver_starts", fc.solver_starts);
    }
    if (j.contains("agent")) {
      const json& a = j.at("agent");
      detail::reject_unknown(a, {"kind", "hidden", "gamma", "tau", "policy_delay", "target_noise", "target_noise_clip",
                                 "exploration_noise", "batch", "lr", "buffer_capacity", "obs_scale", "warmup_steps"},
                             "agent");
      TD3Config& ac = cfg.agent;
      read_opt(a, "kind", cfg.agent_kind);
      read_opt(a, "hidden", ac.hidden);
      read_opt(a, "gamma", ac.gamma);
      read_opt(a, "tau", ac.tau);
      read_opt(a, "policy_delay", ac.policy_delay);
      read_opt(a, "target_noise", ac.target_noise);
      read_opt(a, "target_noise_clip", ac.target_noise_clip);
      read_opt(a, "exploration_noise", ac.exploration_noise);
      read_opt(a, "batch", ac.batch);
      read_opt(a, "lr", ac.lr);
      read_opt(a, "buffer_capacity", ac.buffer_capacity);
      read_opt(a, "obs_scale", ac.obs_scale);
      read_opt(a, "warmup_steps", ac.warmup_steps);
    }
    read_opt(j, "n_total", cfg.n_total);
    read_opt(j, "episodes", cfg.episodes);
    if (j.contains("reward")) {
      const json& r = j.at("reward");
      detail::reject_unknown(r, {"w_dist", "R_goal", "R_collide", "lambda_adjust"}, "reward");
      read_opt(r, "w_dist", cfg.reward.w_dist);
      read_opt(r, "R_goal", cfg.reward.R_goal);
      read_opt(r, "R_collide", cfg.reward.R_collide);
      read_opt(r, "lambda_adjust", cfg.reward.lambda_adjust);
    }
    cfg.filter.adjustment_penalty_weight = cfg.reward.lambda_adjust;
    read_opt(j, "mode", cfg.mode);
    if (j.contains("paths")) {
      const json& p = j.at("paths");
      detail::reject_unknown(p, {"dataset", "weights", "logs"}, "paths");
      read_opt(p, "dataset", cfg.paths.dataset);
      read_opt(p, "weights", cfg.paths.weights);
      read_opt(p, "logs", cfg.paths.logs);
    }
    read_opt(j, "seed", cfg.seed);
    cfg.world.seed = cfg.seed;
    if (j.contains("collect")) {
      const json& c = j.at("collect");
      detail::reject_unknown(c, {"q", "T"}, "collect");
      read_opt(c, "q", cfg.collect_q);
      read_opt(c, "T", cfg.collect_T);
    }
    read_opt(j, "baseline", cfg.baseline);
    read_opt(j, "measure_latency", cfg.measure_latency);
    read_opt(j, "adjust_tol", cfg.adjust_tol);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return cfg;
}

inline RunConfig load_run_config(const std::string& path)
{
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
  return run_config_from_json(j);
}

/// Sets the master seed (world layouts, agent init, exploration all derive from it).
inline void set_seed(RunConfig& cfg, std::uint64_t seed)
{
  cfg.seed = seed;
  cfg.world.seed = seed;
}

// ---------------------------------------------------------------------------
// Reward and metrics
// ---------------------------------------------------------------------------

/// -w_dist ||goal - pos|| + R_goal [goal] + R_collide [collision] - lambda ||u_rl - u_applied||^2, pos measured.
inline double reward(const AgentObservation& obs, const Vec& u_rl, const Vec& u_applied, const StepEvents& ev,
                     const RewardWeights& w)
{
  double r = -w.w_dist * obs.goal_offset().norm();
  if (ev.goal_reached) r += w.R_goal;
  if (ev.collision) r += w.R_collide;
  r -= w.lambda_adjust * (u_rl - u_applied).squaredNorm();
  return r;
}

struct EpisodeMetrics
{
  Index episode = 0;
  bool reached_goal = false;
  bool collided = false;
  double mean_speed = 0.0;
  double max_speed = 0.0;
  double cum_reward = 0.0;
  Index adjustments = 0;
  Index failsafes = 0;
  double mean_latency_ms = 0.0;
  Index steps = 0;
  /// Per-step filter latencies (empty in baseline mode).
  std::vector<double> latencies_ms;
};

struct AggregateMetrics
{
  Index episodes = 0;
  double goal_rate = 0.0;
  double collision_rate = 0.0;
  double mean_speed = 0.0;
  double max_speed = 0.0;
  double mean_reward = 0.0;
  double mean_latency_ms = 0.0;
  double latency_std_ms = 0.0;
  Index total_steps = 0;
};

/// Means over episodes; max_speed is the maximum; latency statistics pool all filter calls.
inline AggregateMetrics aggregate(const std::vector<EpisodeMetrics>& eps)
{
  AggregateMetrics a;
  a.episodes = static_cast<Index>(eps.size());
  if (eps.empty()) return a;
  std::vector<double> lat;
  for (const auto& e : eps) {
    a.goal_rate += e.reached_goal ? 1.0 : 0.0;
    a.collision_rate += e.collided ? 1.0 : 0.0;
    a.mean_speed += e.mean_speed;
    a.max_speed = std::max(a.max_speed, e.max_speed);
    a.mean_reward += e.cum_reward;
    a.total_steps += e.steps;
    lat.insert(lat.end(), e.latencies_ms.begin(), e.latencies_ms.end());
  }
  const double n = static_cast<double>(eps.size());
  a.goal_rate /= n;
  a.collision_rate /= n;
  a.mean_speed /= n;
  a.mean_reward /= n;
  if (!lat.empty()) {
    double s = 0.0;
    for (double v : lat) s += v;
    a.mean_latency_ms = s / static_cast<double>(lat.size());
    double ss = 0.0;
    for (double v : lat) ss += (v - a.mean_latency_ms) * (v - a.mean_latency_ms);
    a.latency_std_ms = std::sqrt(ss / static_cast<double>(lat.size()));
  }
  return a;
}

inline const char* kMetricsHeader =
    "episode,reached_goal,collided,mean_speed,max_speed,cum_reward,adjustments,failsafes,mean_latency_ms";
inline const char* kAggregateHeader =
    "episodes,goal_rate,collision_rate,mean_speed,max_speed,mean_reward,mean_latency_ms,latency_std_ms";

namespace detail {

inline std::string fmt_double(double v)
{
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

}  // namespace detail

inline void write_metrics_csv(std::ostream& out, const std::vector<EpisodeMetrics>& eps)
{
  using detail::fmt_double;
  out << kMetricsHeader << '\n';
  for (const auto& e : eps) {
    out << e.episode << ',' << (e.reached_goal ? 1 : 0) << ',' << (e.collided ? 1 : 0) << ','
        << fmt_double(e.mean_speed) << ',' << fmt_double(e.max_speed) << ',' << fmt_double(e.cum_reward) << ','
        << e.adjustments << ',' << e.failsafes << ',' << fmt_double(e.mean_latency_ms) << '\n';
  }
}

/// Zero episodes writes the header and a row with count 0 and empty fields.
inline void write_aggregate_csv(std::ostream& out, const AggregateMetrics& a)
{
  using detail::fmt_double;
  out << kAggregateHeader << '\n';
  if (a.episodes == 0) {
    out << "0,,,,,,,\n";
    return;
  }
  out << a.episodes << ',' << fmt_double(a.goal_rate) << ',' << fmt_double(a.collision_rate) << ','
      << fmt_double(a.mean_speed) << ',' << fmt_double(a.max_speed) << ',' << fmt_double(a.mean_reward) << ','
      << fmt_double(a.mean_latency_ms) << ',' << fmt_double(a.latency_std_ms) << '\n';
}

// ---------------------------------------------------------------------------
// Episodes
// ---------------------------------------------------------------------------

struct StepRecord
{
  Index episode = 0;
  std::uint64_t episode_seed = 0;
  Index k = 0;
  Vec y;
  Vec u_rl;
  Vec u_applied;
  bool adjusted = false;
  bool failsafe = false;
  double reward = 0.0;
  bool collision = false;
  bool goal = false;
  Vec y_next;
  Vec x_next;
  double latency_ms = 0.0;
};

inline json step_record_to_json(const StepRecord& s)
{
  using detail::from_vec;
  return json{{"episode", s.episode},   {"episode_seed", s.episode_seed}, {"k", s.k},
              {"y", from_vec(s.y)},     {"u_rl", from_vec(s.u_rl)},       {"u_applied", from_vec(s.u_applied)},
              {"adjusted", s.adjusted}, {"failsafe", s.failsafe},         {"reward", s.reward},
              {"collision", s.collision}, {"goal", s.goal},               {"y_next", from_vec(s.y_next)},
              {"x_next", from_vec(s.x_next)}};
}

inline StepRecord step_record_from_json(const json& j)
{
  using detail::to_vec;
  StepRecord s;
  s.episode = j.at("episode").get<Index>();
  s.episode_seed = j.at("episode_seed").get<std::uint64_t>();
  s.k = j.at("k").get<Index>();
  s.y = to_vec(j.at("y"));
  s.u_rl = to_vec(j.at("u_rl"));
  s.u_applied = to_vec(j.at("u_applied"));
  s.adjusted = j.at("adjusted").get<bool>();
  s.failsafe = j.value("failsafe", false);
  s.reward = j.at("reward").get<double>();
  s.collision = j.at("collision").get<bool>();
  s.goal = j.at("goal").get<bool>();
  s.y_next = to_vec(j.at("y_next"));
  s.x_next = to_vec(j.at("x_next"));
  return s;
}

struct EpisodeOptions
{
  Index episode = 0;
  std::uint64_t episode_seed = 0;
  bool explore = false;
  bool train = false;
  /// Remaining uniform-random warmup steps (training only); decremented in place.
  Index* warmup_remaining = nullptr;
  /// Remaining training step budget; decremented in place, episode stops at 0.
  Index* step_budget = nullptr;
  std::mt19937_64* rng = nullptr;
  std::function<void(const StepRecord&)> on_step;
};

/// Thrown when a failsafe step finds no retained plan to execute.
class FailsafeUnavailable : public std::logic_error
{
public:
  using std::logic_error::logic_error;
};

/**
 * One episode of the safe RL loop. With a model the filter is active: each
 * step calls enforce_safety from <y, 0>; on failure the retained plan's next
 * input is applied (after the plan is exhausted the robot holds the braking
 * law on y) and no transition is stored. Without a model the proposed action
 * is applied directly.
 */
inline EpisodeMetrics run_episode(World& world, Agent& agent, const ModelSet* model, const RunConfig& cfg,
                                  const EpisodeOptions& opt)
{
  EpisodeMetrics m;
  m.episode = opt.episode;
  const WorldConfig& wc = world.config();
  AgentObservation obs = world.reset(opt.episode_seed);
  std::optional<Plan> retained;
  size_t retained_next = 0;
  double speed_sum = 0.0;
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  for (Index k = 0; k < wc.max_steps; ++k) {
    if (opt.step_budget && *opt.step_budget <= 0) break;
    const Vec y = world.state().y;

    Vec u_rl;
    if (opt.explore && opt.warmup_remaining && *opt.warmup_remaining > 0) {
      u_rl = sample_box(wc.u_box, *opt.rng);
      --*opt.warmup_remaining;
    } else if (opt.explore) {
      u_rl = agent.act_exploratory(obs, *opt.rng);
    } else {
      u_rl = agent.act(obs);
    }

    Vec u_applied = u_rl;
    bool adjusted = false;
    bool failsafe = false;
    double latency = 0.0;
    if (model) {
      const auto t0 = std::chrono::steady_clock::now();
      std::optional<Plan> plan;
      try {
        plan = enforce_safety(Zonotope(y), u_rl, y, world.obstacles(), wc.workspace, *model, wc.noise, cfg.filter, k);
      } catch (const InfeasibleStart&) {
        plan.reset();
      }
      const auto t1 = std::chrono::steady_clock::now();
      if (cfg.measure_latency) latency = std::chrono::duration<double, std::milli>(t1 - t0).count();
      m.latencies_ms.push_back(latency);

      if (plan) {
        u_applied = plan->inputs.front();
        adjusted = was_adjusted(*plan, u_rl, cfg.adjust_tol);
        retained = std::move(plan);
        retained_next = 1;
      } else {
        failsafe = true;
        if (k > 0 && !retained) throw FailsafeUnavailable("failsafe requested without a retained plan");
        if (retained && retained_next < retained->inputs.size()) {
          u_applied = retained->inputs[retained_next++];
        } else {
          u_applied = cfg.filter.braking_action(y);
        }
      }
    }
    if (adjusted) ++m.adjustments;
    if (failsafe) ++m.failsafes;

    const World::StepResult res = world.step(u_applied);
    const double r = reward(res.observation, u_rl, u_applied, res.events, cfg.reward);
    m.cum_reward += r;
    const double speed = world.state().x.segment(2, 2).norm();
    speed_sum += speed;
    m.max_speed = std::max(m.max_speed, speed);
    ++m.steps;
    if (opt.step_budget) --*opt.step_budget;
    m.collided = m.collided || res.events.collision;
    m.reached_goal = m.reached_goal || res.events.goal_reached;
    const bool terminal = res.events.collision || res.events.goal_reached;

    if (opt.on_step) {
      opt.on_step(StepRecord{opt.episode, opt.episode_seed, k, y, u_rl, u_applied, adjusted, failsafe, r,
                             res.events.collision, res.events.goal_reached, world.state().y, world.state().x,
                             latency});
    }
    if (opt.train && !failsafe) {
      // The filter is part of the environment: store the agent's own action so the penalty is attributable.
      agent.observe_transition(Transition{obs.values, u_rl, r, res.observation.values, terminal});
      if (!(opt.warmup_remaining && *opt.warmup_remaining > 0)) agent.update(*opt.rng);
    }
    obs = res.observation;
    if (terminal) break;
  }
  if (m.steps > 0) m.mean_speed = speed_sum / static_cast<double>(m.steps);
  if (!m.latencies_ms.empty()) {
    double s = 0.0;
    for (double v : m.latencies_ms) s += v;
    m.mean_latency_ms = s / static_cast<double>(m.latencies_ms.size());
  }
  return m;
}

/// Episode seeds of training and evaluation runs come from disjoint streams.
inline std::uint64_t train_episode_seed(std::uint64_t seed, Index e) { return mix_seed(seed, 2 * static_cast<std::uint64_t>(e)); }
inline std::uint64_t eval_episode_seed(std::uint64_t seed, Index e)
{
  return mix_seed(seed, 2 * static_cast<std::uint64_t>(e) + 1);
}

// ---------------------------------------------------------------------------
// Dataset persistence
// ---------------------------------------------------------------------------

/// One JSON object per line: {"states": [[x_0], ..., [x_T]], "inputs": [[u_0], ..., [u_{T-1}]]}.
inline void write_dataset_jsonl(std::ostream& out, const TrajectorySet& ts)
{
  for (const auto& t : ts.trajectories) {
    json states = json::array();
    for (Index c = 0; c < t.states.cols(); ++c) states.push_back(detail::from_vec(t.states.col(c)));
    json inputs = json::array();
    for (Index c = 0; c < t.inputs.cols(); ++c) inputs.push_back(detail::from_vec(t.inputs.col(c)));
    out << json{{"states", states}, {"inputs", inputs}}.dump() << '\n';
  }
}

inline TrajectorySet read_dataset_jsonl(std::istream& in)
{
  TrajectorySet ts;
  std::string line;
  Index lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      const auto& s = j.at("states");
      const auto& u = j.at("inputs");
      if (s.empty() || u.empty()) throw std::invalid_argument("empty trajectory");
      Trajectory t{Mat(static_cast<Index>(s[0].size()), static_cast<Index>(s.size())),
                   Mat(static_cast<Index>(u[0].size()), static_cast<Index>(u.size()))};
      for (size_t c = 0; c < s.size(); ++c) {
        const Vec v = detail::to_vec(s[c]);
        if (v.size() != t.states.rows()) throw std::invalid_argument("ragged states");
        t.states.col(static_cast<Index>(c)) = v;
      }
      for (size_t c = 0; c < u.size(); ++c) {
        const Vec v = detail::to_vec(u[c]);
        if (v.size() != t.inputs.rows()) throw std::invalid_argument("ragged inputs");
        t.inputs.col(static_cast<Index>(c)) = v;
      }
      ts.trajectories.push_back(std::move(t));
    } catch (const std::exception& e) {
      throw std::runtime_error("dataset line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return ts;
}

inline TrajectorySet load_dataset(const std::string& path)
{
  std::ifstream in(path);
  if (!in) throw std::runtime_error("missing dataset: " + path);
  return read_dataset_jsonl(in);
}

/// Offline data for cfg (obstacle-free world, uniform excitation).
inline TrajectorySet collect(const RunConfig& cfg)
{
  return collect_offline_data(cfg.world, cfg.collect_q, cfg.collect_T, mix_seed(cfg.seed, 0xDA7A));
}

inline ModelSet identify(const TrajectorySet& ts, const NoiseModel& noise)
{
  return compute_model_set(build_data_matrices(ts), noise);
}

// ---------------------------------------------------------------------------
// Training and evaluation
// ---------------------------------------------------------------------------

inline std::unique_ptr<Agent> make_agent(const RunConfig& cfg, std::uint64_t seed)
{
  const Index obs_dim = 6 + cfg.world.n_rays;
  if (cfg.agent_kind == "random") return std::make_unique<RandomAgent>(cfg.world.u_box, seed);
  return std::make_unique<TD3Agent>(obs_dim, cfg.world.u_box, cfg.agent, seed);
}

struct TrainResult
{
  std::unique_ptr<Agent> agent;
  std::vector<EpisodeMetrics> metrics;
  Index total_steps = 0;
};

/**
 * Algorithm loop over cfg.episodes training episodes with exploration,
 * stopping early once n_total environment steps have been taken. The model
 * set is identified once from `data`; baseline mode skips the filter.
 */
inline TrainResult train(const RunConfig& cfg, const TrajectorySet& data,
                         const std::function<void(const StepRecord&)>& on_step = {},
                         const std::function<void(const EpisodeMetrics&)>& on_episode = {})
{
  cfg.validate();
  TrainResult out;
  out.agent = make_agent(cfg, mix_seed(cfg.seed, 0xA6E7));
  if (cfg.episodes == 0) return out;
  std::optional<ModelSet> model;
  if (!cfg.baseline) model.emplace(identify(data, cfg.world.noise));
  World world(cfg.world);
  std::mt19937_64 rng(mix_seed(cfg.seed, 0x7EA1));
  Index warmup = cfg.agent.warmup_steps;
  Index budget = cfg.n_total;
  for (Index e = 0; e < cfg.episodes && budget > 0; ++e) {
    EpisodeOptions opt;
    opt.episode = e;
    opt.episode_seed = train_episode_seed(cfg.seed, e);
    opt.explore = true;
    opt.train = true;
    opt.warmup_remaining = &warmup;
    opt.step_budget = &budget;
    opt.rng = &rng;
    opt.on_step = on_step;
    out.metrics.push_back(run_episode(world, *out.agent, model ? &*model : nullptr, cfg, opt));
    out.total_steps += out.metrics.back().steps;
    if (on_episode) on_episode(out.metrics.back());
  }
  return out;
}

/// Deterministic evaluation of `agent` over cfg.episodes episodes.
inline std::vector<EpisodeMetrics> evaluate(const RunConfig& cfg, Agent& agent, const ModelSet* model,
                                            const std::function<void(const StepRecord&)>& on_step = {})
{
  cfg.validate();
  std::vector<EpisodeMetrics> out;
  World world(cfg.world);
  for (Index e = 0; e < cfg.episodes; ++e) {
    EpisodeOptions opt;
    opt.episode = e;
    opt.episode_seed = eval_episode_seed(cfg.seed, e);
    opt.on_step = on_step;
    out.push_back(run_episode(world, agent, cfg.baseline ? nullptr : model, cfg, opt));
  }
  return out;
}

/// Loads weights (td3) or seeds a random agent, identifies the model from `data`, evaluates.
inline std::vector<EpisodeMetrics> evaluate(const RunConfig& cfg, const std::string& weights_path,
                                            const TrajectorySet& data,
                                            const std::function<void(const StepRecord&)>& on_step = {})
{
  std::unique_ptr<Agent> agent = make_agent(cfg, mix_seed(cfg.seed, 0xE7A1));
  if (cfg.agent_kind == "td3") static_cast<TD3Agent&>(*agent).load(weights_path);
  if (cfg.episodes == 0) return {};
  std::optional<ModelSet> model;
  if (!cfg.baseline) model.emplace(identify(data, cfg.world.noise));
  return evaluate(cfg, *agent, model ? &*model : nullptr, on_step);
}

// ---------------------------------------------------------------------------
// Trace replay
// ---------------------------------------------------------------------------

struct ReplayReport
{
  Index steps = 0;
  std::vector<std::string> mismatches;

  bool ok() const { return mismatches.empty(); }
};

/**
 * Recomputes collision, goal and reward of every logged step from the logged
 * states and actions; obstacles and goal are regenerated from cfg and the
 * logged episode seed. Fields are compared exactly.
 */
inline ReplayReport replay_verify(std::istream& trace, const RunConfig& cfg)
{
  ReplayReport rep;
  World world(cfg.world);
  std::optional<std::uint64_t> loaded_seed;
  std::string line;
  Index lineno = 0;
  while (std::getline(trace, line)) {
    ++lineno;
    if (line.empty()) continue;
    StepRecord s;
    try {
      s = step_record_from_json(json::parse(line));
    } catch (const std::exception& e) {
      throw std::runtime_error("malformed trace line " + std::to_string(lineno) + ": " + e.what());
    }
    if (s.x_next.size() != 4 || s.y_next.size() != 4 || s.u_rl.size() != 2 || s.u_applied.size() != 2) {
      throw std::runtime_error("malformed trace line " + std::to_string(lineno) + ": wrong vector sizes");
    }
    if (!loaded_seed || *loaded_seed != s.episode_seed) {
      world.reset(s.episode_seed);
      loaded_seed = s.episode_seed;
    }
    ++rep.steps;
    const std::string where = "line " + std::to_string(lineno) + " (episode " + std::to_string(s.episode) + ", k " +
                              std::to_string(s.k) + "): ";
    StepEvents ev;
    ev.collision = in_collision(s.x_next.head(2), world.obstacles(), cfg.world.workspace);
    ev.goal_reached = (s.x_next.head(2) - world.goal()).norm() <= cfg.world.goal_radius;
    AgentObservation obs{Vec(6)};
    obs.values.head(4) = s.y_next;
    obs.values.segment(4, 2) = world.goal() - s.y_next.head(2);
    const double r = reward(obs, s.u_rl, s.u_applied, ev, cfg.reward);
    if (ev.collision != s.collision) rep.mismatches.push_back(where + "collision flag");
    if (ev.goal_reached != s.goal) rep.mismatches.push_back(where + "goal flag");
    if (r != s.reward) rep.mismatches.push_back(where + "reward");
  }
  return rep;
}

}  // namespace ddsafe

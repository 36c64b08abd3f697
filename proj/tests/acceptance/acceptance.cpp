// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
// Usage: acceptance [criterion numbers...]   (default: all)

#include "properties.hpp"

#include <ddsafe/ddsafe.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>

using namespace ddsafe;

namespace {

struct Outcome
{
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args)
{
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

RunConfig shipped(const std::string& name) { return load_run_config(std::string(DDSAFE_SOURCE_DIR) + "/configs/" + name); }

double mean_of(const std::vector<double>& v)
{
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double sample_var(const std::vector<double>& v)
{
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return ss / static_cast<double>(v.size() - 1);
}

// The cluttered-world evaluation is shared by criteria 1, 2 and 9.
struct ClutteredRun
{
  std::vector<EpisodeMetrics> filtered;
  std::vector<EpisodeMetrics> baseline;
};

const ClutteredRun& cluttered_run(bool need_baseline)
{
  static std::optional<ClutteredRun> run;
  static bool have_baseline = false;
  RunConfig cfg = shipped("cluttered.json");
  cfg.episodes = 100;
  if (!run) {
    run.emplace();
    const ModelSet model = identify(collect(cfg), cfg.world.noise);
    RandomAgent agent(cfg.world.u_box, mix_seed(cfg.seed, 0xACCE));
    run->filtered = evaluate(cfg, agent, &model);
  }
  if (need_baseline && !have_baseline) {
    cfg.baseline = true;
    RandomAgent agent(cfg.world.u_box, mix_seed(cfg.seed, 0xACCE));
    run->baseline = evaluate(cfg, agent, nullptr);
    have_baseline = true;
  }
  return *run;
}

bool verbose() { return std::getenv("DDSAFE_ACCEPTANCE_VERBOSE") != nullptr; }

void report_mismatch(const Vec& y, const Vec& r, const std::optional<CandidatePlan>& sol, const oracle::GridResult& grid)
{
  std::ostringstream s;
  s << "      mismatch y = " << y.transpose() << " ref " << r.transpose() << " solver ";
  if (sol) s << sol->inputs[0].transpose() << " d=" << (sol->inputs[0] - r).norm(); else s << "none";
  s << " grid d=" << (grid.argmin - r).norm();
  s << " grid " << grid.argmin.transpose() << " (res " << grid.resolution << ")";
  std::printf("%s\n", s.str().c_str());
}

// ---------------------------------------------------------------------------

Outcome zero_collision()
{
  const auto& m = cluttered_run(false).filtered;
  const AggregateMetrics a = aggregate(m);
  Index collisions = 0, adjustments = 0, failsafes = 0;
  for (const auto& e : m) {
    collisions += e.collided;
    adjustments += e.adjustments;
    failsafes += e.failsafes;
  }
  return {a.episodes == 100 && a.total_steps >= 10000 && collisions == 0,
          fmt("%ld episodes, %ld steps, %ld collisions, collision rate %.3f (adjustments %ld, failsafes %ld)",
              static_cast<long>(a.episodes), static_cast<long>(a.total_steps), static_cast<long>(collisions),
              a.collision_rate, static_cast<long>(adjustments), static_cast<long>(failsafes))};
}

Outcome baseline_unsafety()
{
  const auto& m = cluttered_run(true).baseline;
  const AggregateMetrics a = aggregate(m);
  return {a.episodes == 100 && a.collision_rate > 0.0,
          fmt("%ld episodes without the filter, collision rate %.2f", static_cast<long>(a.episodes), a.collision_rate)};
}

Outcome reach_soundness()
{
  double worst = 0.0;
  long escapes = 0, checks = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto r = props::reach_soundness(mix_seed(0x5EED, s), 10000, 20);
    worst = std::max(worst, r.membership_residual);
    escapes += r.escapes;
    checks += r.checks;
  }
  return {worst < 1e-8 && escapes == 0,
          fmt("100 systems, max membership residual %.2e, %ld escapes in %ld containment checks", worst, escapes, checks)};
}

Outcome noiseless_identification()
{
  std::mt19937_64 rng(0x1D);
  double worst = 0.0;
  for (int c = 0; c < 100; ++c) {
    const Index n = props::rand_dim(rng, 2, 4), m = props::rand_dim(rng, 1, 2);
    const Mat A = 0.6 * Mat::Identity(n, n) + oracle::random_mat(n, n, rng, 0.3);
    const Mat B = oracle::random_mat(n, m, rng);
    const Zonotope zero(Vec::Zero(n));
    const NoiseModel none{zero, zero, zero};
    const ModelSet M = compute_model_set(build_data_matrices(oracle::simulate_data(A, B, none, 3, 3 * (n + m), rng)), none);
    Mat AB(n, n + m);
    AB << A, B;
    worst = std::max(worst, (M.sigma().center() - AB).norm() / AB.norm());
  }
  return {worst <= 1e-9, fmt("100 systems, max relative error of the model center %.2e", worst)};
}

Outcome minimal_invasiveness()
{
  // Part 1: sampled states and actions in cluttered worlds.
  const RunConfig cfg = shipped("cluttered.json");
  const ModelSet model = identify(collect(cfg), cfg.world.noise);
  const FilterConfig& fc = cfg.filter;
  const Vec inflation = obstacle_inflation(cfg.world.noise, 2, fc);
  const IntervalBox usable = cfg.world.workspace.deflated(inflation);
  World world(cfg.world);
  std::mt19937_64 rng(0x31);
  std::uniform_real_distribution<double> V(-1.0, 1.0);
  long safe = 0, exact = 0, sampled = 0;
  for (std::uint64_t e = 0; safe < 1000 && sampled < 20000; ++e) {
    world.reset(mix_seed(0x31, e));
    for (int i = 0; i < 20 && safe < 1000; ++i) {
      ++sampled;
      Vec y(4);
      y << sample_box(usable, rng), V(rng), V(rng);
      const Vec u = sample_box(fc.u_box, rng);
      SafeRegionSchedule sched;
      try {
        sched = free_boxes(y, world.obstacles(), usable, inflation, fc.n_plan);
      } catch (const InfeasibleStart&) {
        continue;
      }
      if (!verify_plan(rollout_plan(u, Zonotope(y), model, cfg.world.noise, fc, fc.n_plan), sched, fc)) continue;
      ++safe;
      const auto p = enforce_safety(Zonotope(y), u, y, world.obstacles(), cfg.world.workspace, model, cfg.world.noise, fc);
      exact += p && p->inputs[0] == u;
    }
  }

  // Part 2: unsafe instances against the grid oracle, 50 on a line and 50 in the plane.
  long unsafe = 0, agree = 0;
  {
    const Mat A = (Mat(2, 2) << 1.0, 0.1, 0.0, 0.95).finished();
    const Mat B = (Mat(2, 1) << 0.0, 0.1).finished();
    const NoiseModel noise = oracle::exact_noise(A, Vec::Constant(2, 5e-4), Vec::Constant(2, 1e-3));
    std::mt19937_64 r(0x32);
    const ModelSet line = compute_model_set(build_data_matrices(oracle::simulate_data(A, B, noise, 10, 10, r, 2.0)), noise);
    FilterConfig lc;
    lc.u_box = IntervalBox(Vec::Constant(1, -2.0), Vec::Constant(1, 2.0));
    lc.u_brk = Vec::Zero(1);
    lc.brake_gain = 10.0;
    lc.velocity_indices = {1};
    const std::vector<Obstacle> wall{Obstacle{IntervalBox(Vec::Constant(1, 5.0), Vec::Constant(1, 6.0))}};
    const IntervalBox ws(Vec::Constant(1, 0.0), Vec::Constant(1, 10.0));
    std::uniform_real_distribution<double> P(4.3, 4.9), Vl(0.0, 1.2);
    for (int tries = 0; tries < 5000 && unsafe < 50; ++tries) {
      const Vec y = (Vec(2) << P(r), Vl(r)).finished();
      const Vec u = Vec::Constant(1, 2.0);
      SafeRegionSchedule sched;
      try {
        sched = free_boxes(y, wall, ws, obstacle_inflation(noise, 1, lc), lc.n_plan);
      } catch (const InfeasibleStart&) {
        continue;
      }
      if (verify_plan(rollout_plan(u, Zonotope(y), line, noise, lc, lc.n_plan), sched, lc)) continue;
      const auto grid = oracle::grid_argmin(u, Zonotope(y), sched, line, noise, lc);
      if (!grid.found) continue;
      ++unsafe;
      const auto sol = solve_ddpc(u, y, sched, line, noise, lc);
      const bool ok = sol && oracle::plan_feasible(sol->inputs[0], Zonotope(y), sched, line, noise, lc) &&
                      std::abs(sol->inputs[0](0) - grid.argmin(0)) <= 2 * grid.resolution;
      agree += ok;
      if (!ok && verbose()) report_mismatch(y, u, sol, grid);
    }
  }
  {
    std::mt19937_64 r(0x33);
    std::uniform_real_distribution<double> Px(-0.2, 0.8), Py(-0.8, 0.8), Vx(0.3, 1.5), Vy(-0.5, 0.5), Uy(-2.0, 2.0);
    const std::vector<Obstacle> block{Obstacle{IntervalBox((Vec(2) << 1.0, -1.0).finished(), (Vec(2) << 2.0, 1.0).finished())}};
    const long target = unsafe + 50;
    for (int tries = 0; tries < 5000 && unsafe < target; ++tries) {
      Vec y(4);
      y << Px(r), Py(r), Vx(r), Vy(r);
      const Vec u = (Vec(2) << 2.0, Uy(r)).finished();
      SafeRegionSchedule sched;
      try {
        sched = free_boxes(y, block, usable, inflation, fc.n_plan);
      } catch (const InfeasibleStart&) {
        continue;
      }
      if (verify_plan(rollout_plan(u, Zonotope(y), model, cfg.world.noise, fc, fc.n_plan), sched, fc)) continue;
      const auto grid = oracle::grid_argmin(u, Zonotope(y), sched, model, cfg.world.noise, fc);
      if (!grid.found) continue;
      ++unsafe;
      const auto sol = solve_ddpc(u, y, sched, model, cfg.world.noise, fc);
      const bool ok = sol && oracle::plan_feasible(sol->inputs[0], Zonotope(y), sched, model, cfg.world.noise, fc) &&
                      oracle::matches_grid(sol->inputs[0], grid, u, fc.u_box);
      agree += ok;
      if (!ok && verbose()) report_mismatch(y, u, sol, grid);
    }
  }
  return {safe == 1000 && exact == safe && unsafe == 100 && agree == unsafe,
          fmt("%ld/%ld feasible references returned bit-exactly; %ld/%ld unsafe instances agree with the grid oracle",
              exact, safe, agree, unsafe)};
}

Outcome set_algebra_suite()
{
  struct Row
  {
    const char* name;
    props::Tally t;
  };
  const std::vector<Row> rows{
      {"linear_map", props::linear_map_cases(1000, 101)},
      {"minkowski", props::minkowski_cases(1000, 102)},
      {"cartesian", props::cartesian_cases(1000, 103)},
      {"interval_hull", props::interval_hull_cases(1000, 104)},
      {"box_contains", props::box_contains_cases(1000, 105)},
      {"may_intersect", props::may_intersect_cases(1000, 106)},
      {"matzono_mul_zono", props::matzono_mul_zono_cases(1000, 107)},
      {"matzono_mul_matrix", props::matzono_mul_matrix_cases(1000, 108)},
      {"reduce_order", props::reduce_order_cases(1000, 109)},
  };
  bool ok = true;
  long cases = 0, failures = 0;
  std::string worst;
  for (const auto& r : rows) {
    ok = ok && r.t.cases >= 1000 && r.t.failures == 0;
    cases += r.t.cases;
    failures += r.t.failures;
    if (r.t.failures) worst += std::string(" ") + r.name;
  }
  return {ok, fmt("%zu operations, %ld cases, %ld failures%s", rows.size(), cases, failures, worst.c_str())};
}

template <class F>
Vec numeric_gradient(F f, Vec p, double eps = 1e-5)
{
  Vec g(p.size());
  for (Index i = 0; i < p.size(); ++i) {
    const double x = p(i);
    p(i) = x + eps;
    const double hi = f(p);
    p(i) = x - eps;
    const double lo = f(p);
    p(i) = x;
    g(i) = (hi - lo) / (2 * eps);
  }
  return g;
}

double rel_error(const Vec& a, const Vec& b)
{
  return (a - b).cwiseAbs().maxCoeff() / std::max(1e-8, std::max(a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff()));
}

Outcome gradient_checks()
{
  double worst = 0.0;
  std::mt19937_64 rng(0x7);
  // 4-parameter toy networks, squashed and linear output.
  for (bool squash : {true, false}) {
    for (int trial = 0; trial < 20; ++trial) {
      Mlp net({1, 1, 1}, squash);
      net.init(rng);
      const Mat X = oracle::random_mat(1, 5, rng, 2.0);
      const Mat dOut = oracle::random_mat(1, 5, rng);
      Mlp::Cache cache;
      net.forward(X, &cache);
      Mlp::Grads g = net.zero_grads();
      net.backward(cache, dOut, g);
      auto loss = [&](const Vec& p) {
        Mlp n = net;
        n.set_flat(p);
        return (n.forward(X).array() * dOut.array()).sum();
      };
      worst = std::max(worst, rel_error(Mlp::flatten(g), numeric_gradient(loss, net.flat())));
    }
  }
  // Actor and both critics of a small TD3 agent.
  TD3Config c;
  c.hidden = 4;
  TD3Agent agent(3, IntervalBox(Vec::Constant(2, -2.0), Vec::Constant(2, 2.0)), c, 0x8);
  const Mat S = oracle::random_mat(3, 6, rng);
  auto actor_obj = [&](const Vec& p) {
    Mlp a = agent.actor();
    a.set_flat(p);
    Mat SA(5, 6);
    SA << S, a.forward(S);
    return -agent.critic1().forward(SA).mean();
  };
  worst = std::max(worst, rel_error(agent.actor_gradient(S), numeric_gradient(actor_obj, agent.actor().flat())));
  const Mat SA = oracle::random_mat(5, 6, rng);
  const Vec y = oracle::random_mat(6, 1, rng).col(0);
  for (Mlp* critic : {&agent.critic1(), &agent.critic2()}) {
    Mlp::Cache cache;
    const Mat q = critic->forward(SA, &cache);
    Mlp::Grads g = critic->zero_grads();
    critic->backward(cache, (2.0 / 6.0) * (q.row(0).transpose() - y).transpose(), g);
    auto mse = [&](const Vec& p) {
      Mlp n = *critic;
      n.set_flat(p);
      return (n.forward(SA).row(0).transpose() - y).squaredNorm() / 6.0;
    };
    worst = std::max(worst, rel_error(Mlp::flatten(g), numeric_gradient(mse, critic->flat())));
  }
  return {worst < 1e-4, fmt("max relative error %.2e (toy networks, actor, two critics)", worst)};
}

Outcome learning_sanity()
{
  std::vector<double> trained_means, random_means;
  std::vector<double> trained_all, random_all;
  for (std::uint64_t seed : {1, 2, 3}) {
    RunConfig cfg = shipped("open_field.json");
    set_seed(cfg, seed);
    cfg.episodes = 200;
    const TrajectorySet data = collect(cfg);
    const TrainResult tr = train(cfg, data);
    const ModelSet model = identify(data, cfg.world.noise);
    RunConfig ev = cfg;
    ev.episodes = 30;
    std::vector<double> t, r;
    for (const auto& m : evaluate(ev, *tr.agent, &model)) t.push_back(m.cum_reward);
    RandomAgent random(cfg.world.u_box, mix_seed(seed, 0xBA5E));
    for (const auto& m : evaluate(ev, random, &model)) r.push_back(m.cum_reward);
    trained_means.push_back(mean_of(t));
    random_means.push_back(mean_of(r));
    trained_all.insert(trained_all.end(), t.begin(), t.end());
    random_all.insert(random_all.end(), r.begin(), r.end());
    std::printf("      seed %llu: trained %.1f, random %.1f (%ld training steps)\n", static_cast<unsigned long long>(seed),
                trained_means.back(), random_means.back(), static_cast<long>(tr.total_steps));
    std::fflush(stdout);
  }
  const double pooled = std::sqrt(0.5 * (sample_var(trained_means) + sample_var(random_means)));
  const double gap = mean_of(trained_means) - mean_of(random_means);
  const double pooled_ep = std::sqrt(0.5 * (sample_var(trained_all) + sample_var(random_all)));
  return {gap >= 2 * pooled,
          fmt("mean reward trained %.1f vs random %.1f, gap %.1f, pooled sd over seed means %.1f (per-episode sd %.1f)",
              mean_of(trained_means), mean_of(random_means), gap, pooled, pooled_ep)};
}

Outcome filter_latency()
{
  const auto& m = cluttered_run(false).filtered;
  const AggregateMetrics a = aggregate(m);
  double worst = 0.0;
  for (const auto& e : m)
    for (double l : e.latencies_ms) worst = std::max(worst, l);
  return {a.mean_latency_ms > 0.0 && a.mean_latency_ms < 50.0,
          fmt("mean %.2f ms, std %.2f ms, max %.2f ms over %ld filter calls (n=4, m=2, n_plan=10, cap 5n)",
              a.mean_latency_ms, a.latency_std_ms, worst, static_cast<long>(a.total_steps))};
}

Outcome determinism()
{
  namespace fs = std::filesystem;
  RunConfig cfg = shipped("cluttered.json");
  cfg.episodes = 5;
  cfg.world.max_steps = 60;
  cfg.agent.warmup_steps = 100;
  cfg.agent.batch = 32;
  cfg.measure_latency = false;
  const fs::path dir = fs::temp_directory_path() / "ddsafe_acceptance";
  fs::create_directories(dir);
  const std::string weights = (dir / "weights.bin").string();
  const TrajectorySet data = collect(cfg);
  static_cast<TD3Agent&>(*train(cfg, data).agent).save(weights);
  cfg.episodes = 10;
  auto csv = [&] {
    std::ostringstream s;
    const auto m = evaluate(cfg, weights, data);
    write_metrics_csv(s, m);
    write_aggregate_csv(s, aggregate(m));
    return s.str();
  };
  const std::string a = csv(), b = csv();
  fs::remove_all(dir);
  return {a == b && a.rfind(kMetricsHeader, 0) == 0, fmt("two evaluations, %zu bytes each, identical: %s", a.size(), a == b ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv)
{
  const std::map<int, std::pair<const char*, std::function<Outcome()>>> criteria{
      {1, {"zero-collision safety", zero_collision}},
      {2, {"baseline unsafety", baseline_unsafety}},
      {3, {"reachability soundness", reach_soundness}},
      {4, {"noiseless identification", noiseless_identification}},
      {5, {"minimal invasiveness", minimal_invasiveness}},
      {6, {"set-algebra oracle suite", set_algebra_suite}},
      {7, {"gradient checks", gradient_checks}},
      {8, {"learning sanity", learning_sanity}},
      {9, {"filter latency", filter_latency}},
      {10, {"determinism", determinism}},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  int failed = 0;
  for (const auto& [id, entry] : criteria) {
    if (!selected.empty() && !selected.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = entry.second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s %2d %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", id, entry.first, o.detail.c_str(), s);
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}

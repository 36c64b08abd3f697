// Command-line front end: collect | train | eval | replay.

#include "ddsafe/ddsafe.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace ddsafe;

namespace {

struct Common
{
  std::string config;
  std::optional<std::uint64_t> seed;
  bool baseline = false;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c)
{
  cmd->add_option("--config", c.config, "run configuration (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "master seed (overrides the config)");
  cmd->add_flag("--baseline", c.baseline, "disable the safety filter");
  cmd->add_option("--out", c.out, "output directory (defaults to paths.logs)");
}

RunConfig prepare(const Common& c)
{
  RunConfig cfg = load_run_config(c.config);
  if (c.seed) set_seed(cfg, *c.seed);
  if (c.baseline) cfg.baseline = true;
  return cfg;
}

fs::path out_dir(const Common& c, const RunConfig& cfg)
{
  fs::path dir = c.out.empty() ? fs::path(cfg.paths.logs) : fs::path(c.out);
  fs::create_directories(dir);
  return dir;
}

std::ofstream open_out(const fs::path& p)
{
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  return f;
}

void print_aggregate(const AggregateMetrics& a)
{
  write_aggregate_csv(std::cout, a);
}

}  // namespace

int main(int argc, char** argv)
{
  CLI::App app{"Data-driven reachability safety filter for reinforcement learning"};
  app.require_subcommand(1);

  Common collect_opts, train_opts, eval_opts, replay_opts;
  auto* collect_cmd = app.add_subcommand("collect", "record offline excitation data (JSONL)");
  add_common(collect_cmd, collect_opts);

  auto* train_cmd = app.add_subcommand("train", "train an agent behind the safety filter");
  add_common(train_cmd, train_opts);

  auto* eval_cmd = app.add_subcommand("eval", "evaluate saved weights");
  add_common(eval_cmd, eval_opts);
  std::string weights;
  eval_cmd->add_option("--weights", weights, "weights file (defaults to paths.weights)");

  auto* replay_cmd = app.add_subcommand("replay", "re-check rewards and events of a step trace");
  add_common(replay_cmd, replay_opts);
  std::string trace_path;
  replay_cmd->add_option("--trace", trace_path, "trace JSONL (defaults to <out>/trace.jsonl)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*collect_cmd) {
      const RunConfig cfg = prepare(collect_opts);
      const fs::path path = collect_opts.out.empty() ? fs::path(cfg.paths.dataset)
                                                     : out_dir(collect_opts, cfg) / "dataset.jsonl";
      if (path.has_parent_path()) fs::create_directories(path.parent_path());
      const TrajectorySet ts = collect(cfg);
      auto f = open_out(path);
      write_dataset_jsonl(f, ts);
      std::cout << "wrote " << ts.trajectories.size() << " trajectories (" << ts.total_steps() << " steps) to "
                << path.string() << '\n';
    } else if (*train_cmd) {
      const RunConfig cfg = prepare(train_opts);
      const fs::path dir = out_dir(train_opts, cfg);
      const TrajectorySet data = load_dataset(cfg.paths.dataset);
      auto trace = open_out(dir / "trace.jsonl");
      TrainResult res = train(
          cfg, data, [&](const StepRecord& s) { trace << step_record_to_json(s).dump() << '\n'; },
          [](const EpisodeMetrics& m) {
            std::cerr << "episode " << m.episode << " steps " << m.steps << " reward " << m.cum_reward
                      << (m.reached_goal ? " goal" : "") << (m.collided ? " COLLISION" : "") << '\n';
          });
      auto metrics = open_out(dir / "metrics.csv");
      write_metrics_csv(metrics, res.metrics);
      const fs::path wpath = train_opts.out.empty() ? fs::path(cfg.paths.weights) : dir / "weights.bin";
      if (auto* td3 = dynamic_cast<TD3Agent*>(res.agent.get())) {
        if (wpath.has_parent_path()) fs::create_directories(wpath.parent_path());
        td3->save(wpath.string());
        std::cout << "weights: " << wpath.string() << '\n';
      }
      std::cout << "episodes " << res.metrics.size() << ", steps " << res.total_steps << '\n';
      print_aggregate(aggregate(res.metrics));
    } else if (*eval_cmd) {
      const RunConfig cfg = prepare(eval_opts);
      const fs::path dir = out_dir(eval_opts, cfg);
      const std::string wpath = weights.empty() ? cfg.paths.weights : weights;
      const TrajectorySet data = cfg.baseline ? TrajectorySet{} : load_dataset(cfg.paths.dataset);
      auto trace = open_out(dir / "trace.jsonl");
      const auto eps =
          evaluate(cfg, wpath, data, [&](const StepRecord& s) { trace << step_record_to_json(s).dump() << '\n'; });
      auto metrics = open_out(dir / "metrics.csv");
      write_metrics_csv(metrics, eps);
      auto agg = open_out(dir / "aggregate.csv");
      write_aggregate_csv(agg, aggregate(eps));
      print_aggregate(aggregate(eps));
    } else if (*replay_cmd) {
      const RunConfig cfg = prepare(replay_opts);
      const fs::path path = trace_path.empty() ? out_dir(replay_opts, cfg) / "trace.jsonl" : fs::path(trace_path);
      std::ifstream in(path);
      if (!in) throw std::runtime_error("cannot open trace " + path.string());
      const ReplayReport rep = replay_verify(in, cfg);
      for (const auto& m : rep.mismatches) std::cout << "mismatch " << m << '\n';
      std::cout << rep.steps << " steps, " << rep.mismatches.size() << " mismatches\n";
      return rep.ok() ? 0 : 2;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

// Identifies the model set from offline data, then lets a full-thrust
// go-to-goal policy drive through a cluttered episode behind the safety filter.

#include "ddsafe/ddsafe.hpp"

#include <iomanip>
#include <iostream>

using namespace ddsafe;

namespace {

/// Full thrust toward the goal; ignores obstacles and its own speed.
class GreedyAgent : public Agent
{
public:
  Vec act(const AgentObservation& obs) override
  {
    const Vec d = obs.goal_offset();
    return d.norm() > 0 ? Vec(2.0 * d / d.norm()) : Vec(Vec::Zero(2));
  }
  Vec act_exploratory(const AgentObservation& obs, std::mt19937_64&) override { return act(obs); }
  void observe_transition(Transition) override {}
  UpdateDiagnostics update(std::mt19937_64&) override { return {}; }
};

}  // namespace

int main()
{
  RunConfig cfg;
  set_seed(cfg, 3);
  cfg.filter = default_filter_config(cfg.world);

  const TrajectorySet data = collect(cfg);
  const ModelSet model = identify(data, cfg.world.noise);
  const IntervalMatrix hull = interval_hull(model.sigma());
  const auto [A, B] = double_integrator(cfg.world.dt, cfg.world.damping);
  Mat AB(4, 6);
  AB << A, B;
  std::cout << "model set center error: " << (model.sigma().center() - AB).cwiseAbs().maxCoeff()
            << ", max radius: " << (hull.upper - hull.lower).maxCoeff() / 2 << "\n";

  GreedyAgent agent;
  World world(cfg.world);
  EpisodeOptions opt;
  opt.episode_seed = 5;
  opt.on_step = [](const StepRecord& s) {
    if (s.k % 5 != 0) return;
    std::cout << std::fixed << std::setprecision(3) << "k=" << std::setw(3) << s.k << "  pos=(" << s.x_next(0)
              << ", " << s.x_next(1) << ")  u_rl=(" << s.u_rl(0) << ", " << s.u_rl(1) << ")  u=(" << s.u_applied(0)
              << ", " << s.u_applied(1) << ")" << (s.adjusted ? "  adjusted" : "") << (s.failsafe ? "  failsafe" : "")
              << "\n";
  };
  const EpisodeMetrics m = run_episode(world, agent, &model, cfg, opt);
  std::cout << "steps " << m.steps << ", collided " << m.collided << ", adjustments " << m.adjustments
            << ", failsafes " << m.failsafes << ", mean latency " << m.mean_latency_ms << " ms\n";
}

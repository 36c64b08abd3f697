#pragma once

/**
 * @file rl_agent.hpp
 * @brief TD3 agent with hand-written backpropagation, replay buffer, random baseline.
 *
 * Actions are produced in a normalized space [-1, 1]^m by a tanh output layer
 * and rescaled affinely onto u_box, so every emitted action lies in u_box
 * whatever the weights are.
 */

#include "ddsafe/environment.hpp"
#include "ddsafe/set_algebra.hpp"

#include "json.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace ddsafe {

// ---------------------------------------------------------------------------
// Multilayer perceptron
// ---------------------------------------------------------------------------

/**
 * Fully connected network: tanh on hidden layers, tanh or identity on the
 * output. Batches are column-major (one sample per column).
 */
class Mlp
{
public:
  struct Cache
  {
    /// acts[0] is the input, acts[l + 1] the activated output of layer l.
    std::vector<Mat> acts;
  };

  struct Grads
  {
    std::vector<Mat> dW;
    std::vector<Vec> db;
  };

  Mlp() = default;

  Mlp(std::vector<Index> sizes, bool tanh_output) : sizes_(std::move(sizes)), tanh_output_(tanh_output)
  {
    detail::require(sizes_.size() >= 2, "Mlp: need at least input and output sizes");
    for (Index s : sizes_) detail::require(s > 0, "Mlp: layer sizes must be positive");
    for (size_t l = 0; l + 1 < sizes_.size(); ++l) {
      W_.push_back(Mat::Zero(sizes_[l + 1], sizes_[l]));
      b_.push_back(Vec::Zero(sizes_[l + 1]));
    }
  }

  /// Uniform in +-1/sqrt(fan_in).
  template <class Rng>
  void init(Rng& rng)
  {
    for (size_t l = 0; l < W_.size(); ++l) {
      const double lim = 1.0 / std::sqrt(static_cast<double>(W_[l].cols()));
      std::uniform_real_distribution<double> u(-lim, lim);
      for (Index i = 0; i < W_[l].size(); ++i) W_[l].data()[i] = u(rng);
      for (Index i = 0; i < b_[l].size(); ++i) b_[l](i) = u(rng);
    }
  }

  Index input_dim() const { return sizes_.front(); }
  Index output_dim() const { return sizes_.back(); }
  Index num_layers() const { return static_cast<Index>(W_.size()); }
  const std::vector<Index>& sizes() const { return sizes_; }
  bool tanh_output() const { return tanh_output_; }

  Mat& weight(Index l) { return W_[static_cast<size_t>(l)]; }
  Vec& bias(Index l) { return b_[static_cast<size_t>(l)]; }
  const Mat& weight(Index l) const { return W_[static_cast<size_t>(l)]; }
  const Vec& bias(Index l) const { return b_[static_cast<size_t>(l)]; }

  Mat forward(const Mat& X, Cache* cache = nullptr) const
  {
    detail::require_dims(X.rows(), input_dim(), "Mlp::forward");
    Mat a = X;
    if (cache) {
      cache->acts.clear();
      cache->acts.push_back(a);
    }
    for (size_t l = 0; l < W_.size(); ++l) {
      Mat z = W_[l] * a;
      z.colwise() += b_[l];
      const bool squash = l + 1 < W_.size() || tanh_output_;
      a = squash ? Mat(z.array().tanh()) : z;
      if (cache) cache->acts.push_back(a);
    }
    return a;
  }

  Vec forward(const Vec& x) const { return forward(Mat(x)).col(0); }

  /// Accumulates parameter gradients of sum(dOut .* out) into g; returns the input gradient.
  Mat backward(const Cache& cache, const Mat& dOut, Grads& g) const
  {
    detail::require(cache.acts.size() == W_.size() + 1, "Mlp::backward: cache from a different network");
    ensure_grads(g);
    Mat d = dOut;
    for (size_t l = W_.size(); l-- > 0;) {
      const Mat& out = cache.acts[l + 1];
      const bool squash = l + 1 < W_.size() || tanh_output_;
      if (squash) d.array() *= 1.0 - out.array().square();
      g.dW[l].noalias() += d * cache.acts[l].transpose();
      g.db[l] += d.rowwise().sum();
      d = W_[l].transpose() * d;
    }
    return d;
  }

  Grads zero_grads() const
  {
    Grads g;
    ensure_grads(g);
    return g;
  }

  Index num_params() const
  {
    Index n = 0;
    for (size_t l = 0; l < W_.size(); ++l) n += W_[l].size() + b_[l].size();
    return n;
  }

  /// Layout: W_0 (column-major), b_0, W_1, b_1, ...
  Vec flat() const
  {
    Vec p(num_params());
    Index k = 0;
    for (size_t l = 0; l < W_.size(); ++l) {
      p.segment(k, W_[l].size()) = Eigen::Map<const Vec>(W_[l].data(), W_[l].size());
      k += W_[l].size();
      p.segment(k, b_[l].size()) = b_[l];
      k += b_[l].size();
    }
    return p;
  }

  void set_flat(const Vec& p)
  {
    detail::require_dims(p.size(), num_params(), "Mlp::set_flat");
    Index k = 0;
    for (size_t l = 0; l < W_.size(); ++l) {
      Eigen::Map<Vec>(W_[l].data(), W_[l].size()) = p.segment(k, W_[l].size());
      k += W_[l].size();
      b_[l] = p.segment(k, b_[l].size());
      k += b_[l].size();
    }
  }

  static Vec flatten(const Grads& g)
  {
    Index n = 0;
    for (size_t l = 0; l < g.dW.size(); ++l) n += g.dW[l].size() + g.db[l].size();
    Vec p(n);
    Index k = 0;
    for (size_t l = 0; l < g.dW.size(); ++l) {
      p.segment(k, g.dW[l].size()) = Eigen::Map<const Vec>(g.dW[l].data(), g.dW[l].size());
      k += g.dW[l].size();
      p.segment(k, g.db[l].size()) = g.db[l];
      k += g.db[l].size();
    }
    return p;
  }

  /// theta <- (1 - tau) theta + tau source.
  void soft_update(const Mlp& source, double tau)
  {
    detail::require(source.sizes_ == sizes_, "Mlp::soft_update: shape mismatch");
    for (size_t l = 0; l < W_.size(); ++l) {
      W_[l] = (1.0 - tau) * W_[l] + tau * source.W_[l];
      b_[l] = (1.0 - tau) * b_[l] + tau * source.b_[l];
    }
  }

private:
  void ensure_grads(Grads& g) const
  {
    if (g.dW.size() == W_.size()) return;
    g.dW.clear();
    g.db.clear();
    for (size_t l = 0; l < W_.size(); ++l) {
      g.dW.push_back(Mat::Zero(W_[l].rows(), W_[l].cols()));
      g.db.push_back(Vec::Zero(b_[l].size()));
    }
  }

  std::vector<Index> sizes_;
  bool tanh_output_ = false;
  std::vector<Mat> W_;
  std::vector<Vec> b_;
};

class Adam
{
public:
  Adam() = default;
  Adam(Index n, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(Vec::Zero(n)), v_(Vec::Zero(n))
  {}

  /// Gradient descent step on `net` with gradient g.
  void step(Mlp& net, const Mlp::Grads& g)
  {
    const Vec grad = Mlp::flatten(g);
    detail::require_dims(grad.size(), m_.size(), "Adam::step");
    ++t_;
    m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
    v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    const Vec delta = (lr_ / c1) * m_.array() / ((v_.array() / c2).sqrt() + eps_);
    net.set_flat(net.flat() - delta);
  }

private:
  double lr_ = 3e-4;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  long t_ = 0;
  Vec m_;
  Vec v_;
};

// ---------------------------------------------------------------------------
// Replay buffer
// ---------------------------------------------------------------------------

/// (obs, action in u_box units, reward, next obs, terminal).
struct Transition
{
  Vec obs;
  Vec action;
  double reward = 0.0;
  Vec next_obs;
  /// Goal or collision: no bootstrapping from next_obs. Time-outs are not terminal.
  bool terminal = false;
};

class ReplayBuffer
{
public:
  explicit ReplayBuffer(size_t capacity = 100000) : capacity_(capacity)
  {
    detail::require(capacity > 0, "ReplayBuffer: capacity must be positive");
  }

  size_t size() const { return data_.size(); }
  size_t capacity() const { return capacity_; }

  /// FIFO: once full, the oldest transition is overwritten.
  void add(Transition t)
  {
    if (data_.size() < capacity_) {
      data_.push_back(std::move(t));
    } else {
      data_[head_] = std::move(t);
      head_ = (head_ + 1) % capacity_;
    }
  }

  /// i-th oldest stored transition.
  const Transition& at(size_t i) const { return data_[(head_ + i) % data_.size()]; }

  /// k distinct indices (Floyd's algorithm), in the order they were drawn.
  template <class Rng>
  std::vector<size_t> sample_indices(size_t k, Rng& rng) const
  {
    detail::require(k <= data_.size(), "ReplayBuffer: batch larger than buffer");
    std::vector<size_t> out;
    out.reserve(k);
    for (size_t j = data_.size() - k; j < data_.size(); ++j) {
      std::uniform_int_distribution<size_t> pick(0, j);
      const size_t t = pick(rng);
      out.push_back(std::find(out.begin(), out.end(), t) == out.end() ? t : j);
    }
    return out;
  }

  template <class Rng>
  std::vector<const Transition*> sample(size_t k, Rng& rng) const
  {
    std::vector<const Transition*> out;
    for (size_t i : sample_indices(k, rng)) out.push_back(&data_[i]);
    return out;
  }

private:
  size_t capacity_;
  size_t head_ = 0;
  std::vector<Transition> data_;
};

// ---------------------------------------------------------------------------
// Agents
// ---------------------------------------------------------------------------

struct UpdateDiagnostics
{
  bool performed = false;
  bool actor_updated = false;
  double critic_loss = 0.0;
  double actor_loss = 0.0;
};

class Agent
{
public:
  virtual ~Agent() = default;
  virtual Vec act(const AgentObservation& obs) = 0;
  virtual Vec act_exploratory(const AgentObservation& obs, std::mt19937_64& rng) = 0;
  virtual void observe_transition(Transition t) = 0;
  virtual UpdateDiagnostics update(std::mt19937_64& rng) = 0;
};

/// Uniform over u_box; ignores observations and never learns.
class RandomAgent : public Agent
{
public:
  RandomAgent(IntervalBox u_box, std::uint64_t seed) : u_box_(std::move(u_box)), rng_(seed) {}

  Vec act(const AgentObservation&) override { return sample_box(u_box_, rng_); }
  Vec act_exploratory(const AgentObservation&, std::mt19937_64& rng) override { return sample_box(u_box_, rng); }
  void observe_transition(Transition) override {}
  UpdateDiagnostics update(std::mt19937_64&) override { return {}; }

private:
  IntervalBox u_box_;
  std::mt19937_64 rng_;
};

struct TD3Config
{
  Index hidden = 64;
  double gamma = 0.99;
  double tau = 0.005;
  Index policy_delay = 2;
  /// Noise scales are in normalized action units (fractions of the u_box half-width).
  double target_noise = 0.2;
  double target_noise_clip = 0.5;
  double exploration_noise = 0.1;
  Index batch = 128;
  double lr = 1e-3;
  size_t buffer_capacity = 100000;
  /// Observations are multiplied by this before entering the networks.
  double obs_scale = 0.2;
  /// Uniform-random actions for this many environment steps before the policy is used.
  Index warmup_steps = 3000;

  void validate() const
  {
    detail::require(hidden > 0 && batch > 0 && policy_delay > 0, "TD3Config: counts must be positive");
    detail::require(gamma >= 0.0 && gamma <= 1.0, "TD3Config: gamma must lie in [0, 1]");
    detail::require(tau >= 0.0 && tau <= 1.0, "TD3Config: tau must lie in [0, 1]");
    detail::require(target_noise >= 0.0 && target_noise_clip >= 0.0 && exploration_noise >= 0.0,
                    "TD3Config: negative noise scale");
    detail::require(lr > 0.0 && obs_scale > 0.0, "TD3Config: lr and obs_scale must be positive");
    detail::require(buffer_capacity > 0 && warmup_steps >= 0, "TD3Config: invalid buffer settings");
  }
};

class WeightsFormatError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

class TD3Agent : public Agent
{
public:
  TD3Agent(Index obs_dim, IntervalBox u_box, TD3Config cfg, std::uint64_t seed)
      : cfg_(std::move(cfg)), u_box_(std::move(u_box)), buffer_(cfg_.buffer_capacity)
  {
    cfg_.validate();
    detail::require(obs_dim > 0 && u_box_.is_bounded(), "TD3Agent: invalid dimensions");
    const Index m = u_box_.dim();
    const Index h = cfg_.hidden;
    std::mt19937_64 rng(seed);
    actor_ = Mlp({obs_dim, h, h, m}, true);
    critic1_ = Mlp({obs_dim + m, h, h, 1}, false);
    critic2_ = Mlp({obs_dim + m, h, h, 1}, false);
    actor_.init(rng);
    critic1_.init(rng);
    critic2_.init(rng);
    actor_target_ = actor_;
    critic1_target_ = critic1_;
    critic2_target_ = critic2_;
    actor_opt_ = Adam(actor_.num_params(), cfg_.lr);
    critic1_opt_ = Adam(critic1_.num_params(), cfg_.lr);
    critic2_opt_ = Adam(critic2_.num_params(), cfg_.lr);
  }

  const TD3Config& config() const { return cfg_; }
  const IntervalBox& u_box() const { return u_box_; }
  Index obs_dim() const { return actor_.input_dim(); }
  ReplayBuffer& buffer() { return buffer_; }

  Mlp& actor() { return actor_; }
  Mlp& critic1() { return critic1_; }
  Mlp& critic2() { return critic2_; }
  Mlp& actor_target() { return actor_target_; }
  Mlp& critic1_target() { return critic1_target_; }
  Mlp& critic2_target() { return critic2_target_; }
  const Mlp& actor() const { return actor_; }

  /// center + half_width .* a for a in [-1, 1]^m.
  Vec to_action(const Vec& a) const
  {
    return u_box_.center() + 0.5 * (u_box_.upper() - u_box_.lower()).cwiseProduct(a);
  }

  /// Inverse of to_action; degenerate axes map to 0.
  Vec to_normalized(const Vec& u) const
  {
    Vec a(u.size());
    for (Index i = 0; i < u.size(); ++i) {
      const double half = 0.5 * (u_box_.upper()(i) - u_box_.lower()(i));
      a(i) = half > 0.0 ? std::clamp((u(i) - u_box_.center()(i)) / half, -1.0, 1.0) : 0.0;
    }
    return a;
  }

  Vec act_vec(const Vec& obs) const { return to_action(actor_.forward(Vec(cfg_.obs_scale * obs))); }

  Vec act(const AgentObservation& obs) override { return act_vec(obs.values); }

  Vec act_exploratory(const AgentObservation& obs, std::mt19937_64& rng) override
  {
    Vec a = actor_.forward(Vec(cfg_.obs_scale * obs.values));
    if (cfg_.exploration_noise > 0.0) {
      std::normal_distribution<double> n(0.0, cfg_.exploration_noise);
      for (Index i = 0; i < a.size(); ++i) a(i) += n(rng);
    }
    return u_box_.clamp(to_action(a.cwiseMax(-1.0).cwiseMin(1.0)));
  }

  void observe_transition(Transition t) override { buffer_.add(std::move(t)); }

  UpdateDiagnostics update(std::mt19937_64& rng) override { return update(buffer_, rng); }

  /**
   * One TD3 step: both critics regress onto r + gamma (1 - terminal) min(Q1', Q2')
   * evaluated at the smoothed target action; every policy_delay-th call the
   * actor ascends Q1 and all targets move toward the live networks by tau.
   */
  UpdateDiagnostics update(const ReplayBuffer& buffer, std::mt19937_64& rng)
  {
    UpdateDiagnostics diag;
    const size_t B = static_cast<size_t>(cfg_.batch);
    if (buffer.size() < B) return diag;
    diag.performed = true;
    ++updates_;

    const Index n = obs_dim();
    const Index m = u_box_.dim();
    const auto batch = buffer.sample(B, rng);
    Mat S(n, static_cast<Index>(B));
    Mat S2(n, static_cast<Index>(B));
    Mat A(m, static_cast<Index>(B));
    Vec R(static_cast<Index>(B));
    Vec notdone(static_cast<Index>(B));
    for (size_t i = 0; i < B; ++i) {
      const auto col = static_cast<Index>(i);
      S.col(col) = cfg_.obs_scale * batch[i]->obs;
      S2.col(col) = cfg_.obs_scale * batch[i]->next_obs;
      A.col(col) = to_normalized(batch[i]->action);
      R(col) = batch[i]->reward;
      notdone(col) = batch[i]->terminal ? 0.0 : 1.0;
    }

    Mat A2 = actor_target_.forward(S2);
    std::normal_distribution<double> noise(0.0, cfg_.target_noise);
    for (Index i = 0; i < A2.size(); ++i) {
      const double eps = std::clamp(noise(rng), -cfg_.target_noise_clip, cfg_.target_noise_clip);
      A2.data()[i] = std::clamp(A2.data()[i] + eps, -1.0, 1.0);
    }
    const Mat SA2 = stack(S2, A2);
    const Vec q_next = critic1_target_.forward(SA2).row(0).transpose().cwiseMin(
        critic2_target_.forward(SA2).row(0).transpose());
    const Vec y = R + cfg_.gamma * notdone.cwiseProduct(q_next);
    last_targets_ = y;

    const Mat SA = stack(S, A);
    diag.critic_loss = critic_step(critic1_, critic1_opt_, SA, y) + critic_step(critic2_, critic2_opt_, SA, y);

    if (updates_ % cfg_.policy_delay == 0) {
      diag.actor_updated = true;
      diag.actor_loss = actor_step(S);
      actor_target_.soft_update(actor_, cfg_.tau);
      critic1_target_.soft_update(critic1_, cfg_.tau);
      critic2_target_.soft_update(critic2_, cfg_.tau);
    }
    return diag;
  }

  /// Critic targets of the most recent update (test hook).
  const Vec& last_targets() const { return last_targets_; }
  long update_count() const { return updates_; }

  /// Gradient of -mean Q1(s, pi(s)) with respect to the actor parameters (flattened).
  Vec actor_gradient(const Mat& S_scaled) const
  {
    Mlp::Cache ac;
    const Mat a = actor_.forward(S_scaled, &ac);
    Mlp::Cache cc;
    const Mat q = critic1_.forward(stack(S_scaled, a), &cc);
    Mlp::Grads cg = critic1_.zero_grads();
    const Mat dq = Mat::Constant(1, q.cols(), -1.0 / static_cast<double>(q.cols()));
    const Mat dsa = critic1_.backward(cc, dq, cg);
    Mlp::Grads ag = actor_.zero_grads();
    actor_.backward(ac, dsa.bottomRows(a.rows()), ag);
    return Mlp::flatten(ag);
  }

  void save(const std::string& path) const
  {
    nlohmann::json header;
    header["format"] = "ddsafe-weights";
    header["version"] = 1;
    header["obs_dim"] = obs_dim();
    header["action_dim"] = u_box_.dim();
    nlohmann::json tensors = nlohmann::json::array();
    Index count = 0;
    for (const auto& [name, net] : named_networks()) {
      for (Index l = 0; l < net->num_layers(); ++l) {
        tensors.push_back({{"name", name + ".W" + std::to_string(l)},
                           {"shape", {net->weight(l).rows(), net->weight(l).cols()}}});
        tensors.push_back({{"name", name + ".b" + std::to_string(l)}, {"shape", {net->bias(l).size()}}});
      }
      count += net->num_params();
    }
    header["tensors"] = tensors;
    header["count"] = count;

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open weights file for writing: " + path);
    out << header.dump() << '\n';
    for (const auto& [name, net] : named_networks()) write_doubles(out, net->flat());
    if (!out) throw std::runtime_error("failed writing weights file: " + path);
  }

  /// Restores every network from `path`; throws WeightsFormatError on shape or length mismatch.
  void load(const std::string& path)
  {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open weights file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw WeightsFormatError("weights file: missing header");
    nlohmann::json header;
    try {
      header = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw WeightsFormatError(std::string("weights file: malformed header: ") + e.what());
    }
    if (header.value("format", "") != "ddsafe-weights") throw WeightsFormatError("weights file: unknown format");

    const auto& tensors = header.at("tensors");
    Index expected = 0;
    size_t t = 0;
    for (const auto& [name, net] : named_networks()) {
      for (Index l = 0; l < net->num_layers(); ++l) {
        check_tensor(tensors, t++, name + ".W" + std::to_string(l), {net->weight(l).rows(), net->weight(l).cols()});
        check_tensor(tensors, t++, name + ".b" + std::to_string(l), {net->bias(l).size()});
      }
      expected += net->num_params();
    }
    if (t != tensors.size()) throw WeightsFormatError("weights file: unexpected number of tensors");
    if (header.at("count").get<Index>() != expected) throw WeightsFormatError("weights file: header count mismatch");

    std::vector<Vec> payload;
    for (const auto& [name, net] : named_networks()) payload.push_back(read_doubles(in, net->num_params()));
    if (in.peek() != std::char_traits<char>::eof()) throw WeightsFormatError("weights file: trailing bytes after payload");
    size_t i = 0;
    for (const auto& [name, net] : named_networks()) net->set_flat(payload[i++]);
  }

private:
  static Mat stack(const Mat& top, const Mat& bottom)
  {
    Mat out(top.rows() + bottom.rows(), top.cols());
    out << top, bottom;
    return out;
  }

  static double critic_step(Mlp& critic, Adam& opt, const Mat& SA, const Vec& y)
  {
    Mlp::Cache cache;
    const Mat q = critic.forward(SA, &cache);
    const Vec err = q.row(0).transpose() - y;
    const double B = static_cast<double>(y.size());
    Mlp::Grads g = critic.zero_grads();
    critic.backward(cache, (2.0 / B) * err.transpose(), g);
    opt.step(critic, g);
    return err.squaredNorm() / B;
  }

  double actor_step(const Mat& S)
  {
    Mlp::Cache ac;
    const Mat a = actor_.forward(S, &ac);
    Mlp::Cache cc;
    const Mat q = critic1_.forward(stack(S, a), &cc);
    const double B = static_cast<double>(S.cols());
    Mlp::Grads cg = critic1_.zero_grads();
    const Mat dsa = critic1_.backward(cc, Mat::Constant(1, q.cols(), -1.0 / B), cg);
    Mlp::Grads ag = actor_.zero_grads();
    actor_.backward(ac, dsa.bottomRows(a.rows()), ag);
    actor_opt_.step(actor_, ag);
    return -q.mean();
  }

  std::vector<std::pair<std::string, const Mlp*>> named_networks() const
  {
    return {{"actor", &actor_},           {"critic1", &critic1_},
            {"critic2", &critic2_},       {"actor_target", &actor_target_},
            {"critic1_target", &critic1_target_}, {"critic2_target", &critic2_target_}};
  }

  std::vector<std::pair<std::string, Mlp*>> named_networks()
  {
    return {{"actor", &actor_},           {"critic1", &critic1_},
            {"critic2", &critic2_},       {"actor_target", &actor_target_},
            {"critic1_target", &critic1_target_}, {"critic2_target", &critic2_target_}};
  }

  static void check_tensor(const nlohmann::json& tensors, size_t i, const std::string& name, std::vector<Index> shape)
  {
    if (i >= tensors.size()) throw WeightsFormatError("weights file: missing tensor " + name);
    const auto& t = tensors[i];
    if (t.value("name", "") != name) throw WeightsFormatError("weights file: expected tensor " + name);
    if (t.at("shape").get<std::vector<Index>>() != shape) throw WeightsFormatError("weights file: shape mismatch for " + name);
  }

  static void write_doubles(std::ostream& out, const Vec& v)
  {
    for (Index i = 0; i < v.size(); ++i) {
      std::uint64_t bits = std::bit_cast<std::uint64_t>(v(i));
      if constexpr (std::endian::native == std::endian::big) bits = byteswap64(bits);
      char buf[8];
      std::memcpy(buf, &bits, 8);
      out.write(buf, 8);
    }
  }

  static Vec read_doubles(std::istream& in, Index n)
  {
    Vec v(n);
    for (Index i = 0; i < n; ++i) {
      char buf[8];
      if (!in.read(buf, 8)) throw WeightsFormatError("weights file: truncated payload");
      std::uint64_t bits;
      std::memcpy(&bits, buf, 8);
      if constexpr (std::endian::native == std::endian::big) bits = byteswap64(bits);
      v(i) = std::bit_cast<double>(bits);
    }
    return v;
  }

  static std::uint64_t byteswap64(std::uint64_t x)
  {
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r = (r << 8) | ((x >> (8 * i)) & 0xFF);
    return r;
  }

  TD3Config cfg_;
  IntervalBox u_box_;
  ReplayBuffer buffer_;
  Mlp actor_, critic1_, critic2_;
  Mlp actor_target_, critic1_target_, critic2_target_;
  Adam actor_opt_, critic1_opt_, critic2_opt_;
  long updates_ = 0;
  Vec last_targets_;
};

}  // namespace ddsafe

#include "salgail/gail.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "salgail/error.hpp"
#include "salgail/io.hpp"
#include "salgail/nn/checkpoint.hpp"
#include "salgail/parallel.hpp"

namespace salgail {

using nn::Tensor;
using Batch = std::span<const TransitionRecord* const>;

const char* to_string(RewardMode m) {
  switch (m) {
    case RewardMode::Gail: return "gail";
    case RewardMode::HandDesigned: return "hand";
    case RewardMode::Random: return "random";
  }
  return "gail";
}

RewardMode parse_reward_mode(const std::string& s) {
  if (s == "gail") return RewardMode::Gail;
  if (s == "hand") return RewardMode::HandDesigned;
  if (s == "random") return RewardMode::Random;
  throw ConfigError("unknown reward mode '" + s + "' (expected gail, hand or random)");
}

GailHyper desk_preset() { return GailHyper{}; }

GailHyper paper_preset() {
  GailHyper h;
  h.cycles = 50000;
  h.episodes = 42;
  h.episode_steps = 5;
  h.streams = 30;
  h.gamma = 0.99;
  h.lambda1 = 0.7;
  h.lambda2 = 0.01;
  h.minibatch = 6;
  h.d_batch = 150;
  h.generator_lr = 7e-4;
  h.critic_lr = 2e-4;
  h.weight_decay = 2e-3;
  h.generator_slope = 0.01;
  h.critic_slope = 0.2;
  h.bn_eps = 1e-5;
  h.bn_momentum = 0.1;
  h.obs_size = 84;
  return h;
}

nlohmann::json to_json(const GailHyper& h) {
  return {{"cycles", h.cycles},
          {"episodes", h.episodes},
          {"episode_steps", h.episode_steps},
          {"streams", h.streams},
          {"gamma", h.gamma},
          {"lambda1", h.lambda1},
          {"lambda2", h.lambda2},
          {"minibatch", h.minibatch},
          {"d_batch", h.d_batch},
          {"epsilon_start", h.epsilon_start},
          {"epsilon_end", h.epsilon_end},
          {"epsilon_decay_fraction", h.epsilon_decay_fraction},
          {"generator_lr", h.generator_lr},
          {"critic_lr", h.critic_lr},
          {"weight_decay", h.weight_decay},
          {"generator_slope", h.generator_slope},
          {"critic_slope", h.critic_slope},
          {"bn_eps", h.bn_eps},
          {"bn_momentum", h.bn_momentum},
          {"value_coef", h.value_coef},
          {"advantage", h.advantage},
          {"grad_clip", h.grad_clip},
          {"importance_weights", h.importance_weights},
          {"reward_mode", to_string(h.reward_mode)},
          {"early_stop", h.early_stop},
          {"converge_window", h.converge_window},
          {"converge_tol", h.converge_tol},
          {"obs_size", h.obs_size},
          {"fov_deg", h.fov_deg},
          {"seed", h.seed},
          {"jobs", h.jobs}};
}

namespace {

template <typename T>
void take(const nlohmann::json& j, const char* key, T& out) {
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace

GailHyper apply_overrides(GailHyper h, const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("hyperparameter overrides must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    const char* k = key.c_str();
    if (key == "cycles") take(j, k, h.cycles);
    else if (key == "episodes") take(j, k, h.episodes);
    else if (key == "episode_steps") take(j, k, h.episode_steps);
    else if (key == "streams") take(j, k, h.streams);
    else if (key == "gamma") take(j, k, h.gamma);
    else if (key == "lambda1") take(j, k, h.lambda1);
    else if (key == "lambda2") take(j, k, h.lambda2);
    else if (key == "minibatch") take(j, k, h.minibatch);
    else if (key == "d_batch") take(j, k, h.d_batch);
    else if (key == "epsilon_start") take(j, k, h.epsilon_start);
    else if (key == "epsilon_end") take(j, k, h.epsilon_end);
    else if (key == "epsilon_decay_fraction") take(j, k, h.epsilon_decay_fraction);
    else if (key == "generator_lr") take(j, k, h.generator_lr);
    else if (key == "critic_lr") take(j, k, h.critic_lr);
    else if (key == "weight_decay") take(j, k, h.weight_decay);
    else if (key == "generator_slope") take(j, k, h.generator_slope);
    else if (key == "critic_slope") take(j, k, h.critic_slope);
    else if (key == "bn_eps") take(j, k, h.bn_eps);
    else if (key == "bn_momentum") take(j, k, h.bn_momentum);
    else if (key == "value_coef") take(j, k, h.value_coef);
    else if (key == "advantage") take(j, k, h.advantage);
    else if (key == "grad_clip") take(j, k, h.grad_clip);
    else if (key == "importance_weights") take(j, k, h.importance_weights);
    else if (key == "reward_mode") {
      std::string s;
      take(j, k, s);
      h.reward_mode = parse_reward_mode(s);
    } else if (key == "early_stop") take(j, k, h.early_stop);
    else if (key == "converge_window") take(j, k, h.converge_window);
    else if (key == "converge_tol") take(j, k, h.converge_tol);
    else if (key == "obs_size") take(j, k, h.obs_size);
    else if (key == "fov_deg") take(j, k, h.fov_deg);
    else if (key == "seed") take(j, k, h.seed);
    else if (key == "jobs") take(j, k, h.jobs);
    else throw ConfigError("unknown hyperparameter '" + key + "'");
  }
  return h;
}

void validate(const GailHyper& h) {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(what);
  };
  require(h.cycles >= 1, "cycles must be >= 1");
  require(h.episodes >= 1, "episodes must be >= 1");
  require(h.episode_steps >= 1, "episode_steps must be >= 1");
  require(h.streams >= 1, "streams must be >= 1");
  require(h.gamma > 0.0 && h.gamma <= 1.0, "gamma must lie in (0, 1]");
  require(h.lambda1 >= 0.0 && h.lambda2 >= 0.0, "lambda1 and lambda2 must be >= 0");
  require(h.minibatch >= 1 && h.d_batch >= 1, "batch sizes must be >= 1");
  require(h.epsilon_start >= 0.0 && h.epsilon_start <= 1.0 && h.epsilon_end >= 0.0 && h.epsilon_end <= 1.0,
          "epsilon values must lie in [0, 1]");
  require(h.epsilon_decay_fraction >= 0.0 && h.epsilon_decay_fraction <= 1.0,
          "epsilon_decay_fraction must lie in [0, 1]");
  require(h.generator_lr > 0.0 && h.critic_lr > 0.0, "learning rates must be > 0");
  require(h.weight_decay >= 0.0, "weight_decay must be >= 0");
  require(h.bn_eps > 0.0 && h.bn_momentum > 0.0 && h.bn_momentum <= 1.0, "invalid batch-norm settings");
  require(h.value_coef >= 0.0, "value_coef must be >= 0");
  require(h.grad_clip >= 0.0, "grad_clip must be >= 0");
  require(h.converge_window >= 1 && h.converge_tol >= 0.0, "invalid convergence settings");
  require(h.fov_deg > 0.0 && h.fov_deg < 180.0, "fov_deg must lie in (0, 180)");
  require(h.jobs >= 1, "jobs must be >= 1");
  trunk_extent(h.obs_size);
}

int trajectory_steps(const GailHyper& h) { return h.episodes * h.episode_steps; }

double epsilon_at(const GailHyper& h, int cycle) {
  const double span = h.epsilon_decay_fraction * h.cycles;
  if (span <= 0.0 || cycle >= span) return h.epsilon_end;
  const double f = cycle / span;
  return h.epsilon_start + (h.epsilon_end - h.epsilon_start) * f;
}

EnvConfig make_env_config(const GailHyper& h, double step_mag_deg) {
  EnvConfig c;
  c.step_mag_deg = step_mag_deg;
  c.steps = trajectory_steps(h);
  c.viewport = ViewportSpec{h.fov_deg, h.fov_deg, h.obs_size, h.obs_size, Interp::Bilinear};
  return c;
}

std::mt19937_64 derive_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  std::vector<std::uint32_t> words{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  for (auto p : path) {
    words.push_back(static_cast<std::uint32_t>(p));
    words.push_back(static_cast<std::uint32_t>(p >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

GailModel make_model(const GailHyper& h, const EnvConfig& env, int obs_channels) {
  validate(h);
  validate(env);
  if (env.viewport.out_w != env.viewport.out_h) throw ConfigError("observations must be square");
  GailModel m;
  m.hyper = h;
  m.env = env;
  m.obs_channels = obs_channels;
  const NetworkShape shape{obs_channels, env.viewport.out_w, h.streams};
  m.generator = GeneratorNet(shape, h.generator_slope);
  m.critic = CriticNet(shape, h.critic_slope, h.bn_eps, h.bn_momentum);
  auto rng = derive_rng(h.seed, {0});
  m.generator.init(rng);
  m.critic.init(rng);
  m.generator_opt.config = {nn::OptimizerKind::RmsProp, h.generator_lr, 0.0};
  m.discriminator_opt.config = {nn::OptimizerKind::Adam, h.critic_lr, h.weight_decay};
  m.selector_opt.config = {nn::OptimizerKind::Adam, h.critic_lr, h.weight_decay};
  return m;
}

ActionId sample_action(std::span<const double> probs, double epsilon, std::mt19937_64& rng) {
  if (probs.size() != static_cast<std::size_t>(kNumActions)) {
    throw InputError("policy must give " + std::to_string(kNumActions) + " probabilities");
  }
  double total = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw NumericalError("invalid policy probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-6) throw NumericalError("policy probabilities do not sum to 1");
  if (epsilon < 0.0 || epsilon > 1.0) throw ConfigError("epsilon must lie in [0, 1]");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (epsilon > 0.0 && u(rng) < epsilon) {
    std::uniform_int_distribution<int> pick(0, kNumActions - 1);
    return ActionId(pick(rng));
  }
  const double x = u(rng) * total;
  double acc = 0.0;
  int last = 0;
  for (int a = 0; a < kNumActions; ++a) {
    if (probs[a] <= 0.0) continue;
    last = a;
    acc += probs[a];
    if (x < acc) return ActionId(a);
  }
  return ActionId(last);
}

double reward(double d_out, std::span<const double> s_out, int stream, double lambda1) {
  if (stream < 0 || static_cast<std::size_t>(stream) >= s_out.size()) throw InputError("stream index out of range");
  const double d = std::clamp(d_out, kDiscriminatorClamp, 1.0 - kDiscriminatorClamp);
  const double s = std::clamp(s_out[stream], kDiscriminatorClamp, 1.0);
  return -std::log(1.0 - d) + lambda1 * std::log(s);
}

std::vector<double> discounted_returns(std::span<const double> rewards, double gamma) {
  if (rewards.empty()) throw InputError("discounted_returns needs at least one reward");
  std::vector<double> out(rewards.size());
  double acc = 0.0;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    acc = rewards[i] + gamma * acc;
    out[i] = acc;
  }
  return out;
}

nn::Tensor observation_tensor(const ImagePatch& patch) {
  Tensor t({patch.channels, patch.height, patch.width});
  std::size_t i = 0;
  for (int c = 0; c < patch.channels; ++c) {
    for (int r = 0; r < patch.height; ++r) {
      for (int col = 0; col < patch.width; ++col) t[i++] = patch.at(r, col, c);
    }
  }
  return t;
}

nn::Tensor stack_obs(Batch batch) {
  if (batch.empty()) throw InputError("empty batch");
  const auto& first = batch.front()->obs;
  std::vector<int> shape{static_cast<int>(batch.size())};
  shape.insert(shape.end(), first.shape.begin(), first.shape.end());
  Tensor out(shape);
  const std::size_t n = first.size();
  for (std::size_t b = 0; b < batch.size(); ++b) {
    if (batch[b]->obs.shape != first.shape) throw InputError("observation shapes differ within a batch");
    std::copy(batch[b]->obs.data.begin(), batch[b]->obs.data.end(), out.data.begin() + b * n);
  }
  return out;
}

nn::Tensor one_hot_actions(Batch batch) {
  Tensor out({static_cast<int>(batch.size()), kNumActions});
  for (std::size_t b = 0; b < batch.size(); ++b) out[b * kNumActions + batch[b]->action.id()] = 1.0;
  return out;
}

nn::Tensor one_hot_streams(Batch batch, int streams) {
  Tensor out({static_cast<int>(batch.size()), streams});
  for (std::size_t b = 0; b < batch.size(); ++b) {
    if (batch[b]->stream < 0 || batch[b]->stream >= streams) throw InputError("stream label out of range");
    out[b * streams + batch[b]->stream] = 1.0;
  }
  return out;
}

namespace {

Tensor stream_code(int rows, int stream, int streams) {
  Tensor c({rows, streams});
  for (int r = 0; r < rows; ++r) c[static_cast<std::size_t>(r) * streams + stream] = 1.0;
  return c;
}

std::vector<std::vector<double>> softmax_rows(const Tensor& logits) {
  const Tensor lp = nn::log_softmax(logits);
  const int rows = logits.dim(0);
  const int cols = logits.dim(1);
  std::vector<std::vector<double>> out(rows, std::vector<double>(cols));
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) out[r][c] = std::exp(lp[static_cast<std::size_t>(r) * cols + c]);
  }
  return out;
}

int argmax(const std::vector<double>& v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

std::vector<std::vector<double>> policy_probs(const GailModel& m, const nn::Tensor& obs, int stream) {
  const auto out = m.generator.predict(obs, stream_code(obs.dim(0), stream, m.hyper.streams));
  return softmax_rows(out.logits);
}

DiscriminatorStep update_discriminator(GailModel& m, Batch expert, Batch generated) {
  if (expert.empty() || generated.empty()) throw InputError("discriminator update needs both batches");
  std::vector<const TransitionRecord*> all(expert.begin(), expert.end());
  all.insert(all.end(), generated.begin(), generated.end());
  const Tensor obs = stack_obs(all);
  const Tensor act = one_hot_actions(all);
  m.critic.zero_grad();
  const auto out = m.critic.forward(obs, act, true);
  const std::size_t ne = expert.size();
  const std::size_t ng = generated.size();
  Tensor gd({static_cast<int>(ne + ng), 1});
  Tensor gs(out.s_logits.shape);
  DiscriminatorStep r;
  double e_term = 0.0;
  double g_term = 0.0;
  int correct = 0;
  for (std::size_t i = 0; i < ne + ng; ++i) {
    const double z = out.d_logit[i];
    if (i < ne) {
      e_term += nn::log_sigmoid(z);
      correct += z > 0.0;
      // ascent on log D  ->  descent gradient -(1 - D) / ne
      gd[i] = -(1.0 - nn::sigmoid(z)) / static_cast<double>(ne);
    } else {
      g_term += nn::log_sigmoid(-z);
      correct += z <= 0.0;
      gd[i] = nn::sigmoid(z) / static_cast<double>(ng);
    }
  }
  r.objective = e_term / ne + g_term / ng;
  r.accuracy = static_cast<double>(correct) / static_cast<double>(ne + ng);
  m.critic.backward(gd, gs);
  const auto params = m.critic.discriminator_parameters();
  nn::optimizer_step(m.discriminator_opt, params);
  return r;
}

SelectorStep update_selector(GailModel& m, Batch batch) {
  if (batch.empty()) throw InputError("selector update needs a nonempty batch");
  const int n = m.hyper.streams;
  const Tensor obs = stack_obs(batch);
  const Tensor act = one_hot_actions(batch);
  const Tensor target = one_hot_streams(batch, n);
  m.critic.zero_grad();
  const auto out = m.critic.forward(obs, act, true);
  const Tensor lp = nn::log_softmax(out.s_logits);
  Tensor gs(out.s_logits.shape);
  Tensor gd(out.d_logit.shape);
  SelectorStep r;
  const double scale = m.hyper.lambda1 / static_cast<double>(batch.size());
  int correct = 0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const int label = batch[b]->stream;
    int best = 0;
    for (int k = 0; k < n; ++k) {
      const std::size_t i = b * n + k;
      if (lp[i] > lp[b * n + best]) best = k;
      gs[i] = scale * (std::exp(lp[i]) - target[i]);
    }
    r.loss -= lp[b * n + label];
    correct += best == label;
  }
  r.loss /= static_cast<double>(batch.size());
  r.accuracy = static_cast<double>(correct) / static_cast<double>(batch.size());
  m.critic.backward(gd, gs);
  const auto params = m.critic.selector_parameters();
  nn::optimizer_step(m.selector_opt, params);
  return r;
}

GeneratorStep update_generator(GailModel& m, Batch batch) {
  if (batch.empty()) throw InputError("generator update needs a nonempty batch");
  const Tensor obs = stack_obs(batch);
  const Tensor code = one_hot_streams(batch, m.hyper.streams);
  m.generator.zero_grad();
  const auto out = m.generator.forward(obs, code, true);
  const Tensor lp = nn::log_softmax(out.logits);
  const auto nb = static_cast<double>(batch.size());
  Tensor gl(out.logits.shape);
  Tensor gv(out.value.shape);
  GeneratorStep r;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const double ret = batch[b]->return_;
    const double v = out.value[b];
    if (!std::isfinite(ret)) throw NumericalError("non-finite return in generator batch");
    double w = m.hyper.lambda2 + ret;
    if (m.hyper.advantage) w -= v;
    const int a = batch[b]->action.id();
    const double mu = batch[b]->behavior_prob;
    if (m.hyper.importance_weights && mu > 0.0) w *= std::min(1.0, std::exp(lp[b * kNumActions + a]) / mu);
    r.policy_loss -= lp[b * kNumActions + a] * w / nb;
    r.value_loss += (ret - v) * (ret - v) / nb;
    for (int k = 0; k < kNumActions; ++k) {
      const std::size_t i = b * kNumActions + k;
      gl[i] = -w * ((k == a ? 1.0 : 0.0) - std::exp(lp[i])) / nb;
    }
    gv[b] = m.hyper.value_coef * 2.0 * (v - ret) / nb;
  }
  m.generator.backward(gl, gv);
  const auto params = m.generator.parameters();
  if (m.hyper.grad_clip > 0.0) nn::clip_grad_norm(params, m.hyper.grad_clip);
  nn::optimizer_step(m.generator_opt, params);
  return r;
}

namespace {

std::vector<const TransitionRecord*> pointers(const std::vector<TransitionRecord>& v) {
  std::vector<const TransitionRecord*> out;
  out.reserve(v.size());
  for (const auto& t : v) out.push_back(&t);
  return out;
}

void cap_batch(std::vector<const TransitionRecord*>& batch, std::size_t cap, std::mt19937_64& rng) {
  if (batch.size() <= cap) return;
  std::shuffle(batch.begin(), batch.end(), rng);
  batch.resize(cap);
}

TransitionRecord expert_record(const EquirectImage& image, const Demo& demo, std::size_t t, int stream,
                               const EnvConfig& env) {
  TransitionRecord r;
  r.obs = observation_tensor(observe(image, demo.rollout.positions[t], env));
  r.action = demo.rollout.actions[t];
  r.stream = stream;
  r.t = static_cast<int>(t);
  r.pos_after = demo.rollout.positions[t + 1];
  return r;
}

void check_training_set(const TrainingSet& data, const GailHyper& h,
                        std::vector<std::vector<const Demo*>>& table) {
  if (data.images.empty()) throw InputError("training needs at least one image");
  if (static_cast<int>(data.demos.size()) != h.streams) {
    throw InputError("training set has demos for " + std::to_string(data.demos.size()) + " streams but " +
                     std::to_string(h.streams) + " streams are configured");
  }
  table.assign(h.streams, std::vector<const Demo*>(data.images.size(), nullptr));
  for (int n = 0; n < h.streams; ++n) {
    for (const auto& d : data.demos[n]) {
      if (d.image >= data.images.size()) throw InputError("demo refers to a missing image");
      if (d.rollout.actions.empty() || d.rollout.positions.size() != d.rollout.actions.size() + 1) {
        throw InputError("malformed demo for stream " + std::to_string(n));
      }
      table[n][d.image] = &d;
    }
    for (std::size_t i = 0; i < data.images.size(); ++i) {
      if (!table[n][i]) {
        const std::string id = i < data.image_ids.size() ? data.image_ids[i] : std::to_string(i);
        throw InputError("stream " + std::to_string(n) + " has no demo on image " + id);
      }
    }
  }
}

FcbParams fit_from_demos(const TrainingSet& data) {
  std::vector<SpherePoint> pts;
  for (const auto& stream : data.demos) {
    for (const auto& d : stream) pts.insert(pts.end(), d.rollout.positions.begin() + 1, d.rollout.positions.end());
  }
  if (pts.size() < 10) return FcbParams{};
  return fit_fcb(pts);
}

}  // namespace

TrainResult train(const TrainingSet& data, const GailHyper& h, const EnvConfig& env, const CycleCallback& on_cycle) {
  validate(h);
  validate(env);
  std::vector<std::vector<const Demo*>> table;
  check_training_set(data, h, table);
  const int B = h.episode_steps;
  if (env.steps < h.episodes * B) throw ConfigError("environment steps shorter than episodes x episode_steps");

  TrainResult result;
  result.model = make_model(h, env, observation_channels(data.images.front(), env));
  GailModel& m = result.model;
  m.fcb = fit_from_demos(data);

  std::vector<EquirectImage> images;
  images.reserve(data.images.size());
  for (const auto& img : data.images) images.push_back(env.rgb ? img : to_grayscale(img));

  const int N = h.streams;
  auto image_rng = derive_rng(h.seed, {1});
  std::vector<double> reward_history;
  int stable_cycles = 0;

  for (int cycle = 0; cycle < h.cycles; ++cycle) {
    const double eps = h.reward_mode == RewardMode::Random ? 1.0 : epsilon_at(h, cycle);
    std::uniform_int_distribution<std::size_t> pick_image(0, images.size() - 1);
    const std::size_t img = pick_image(image_rng);
    const EquirectImage& image = images[img];

    std::vector<EnvState> states(N);
    for (int n = 0; n < N; ++n) states[n] = reset(image, env);

    CycleLog log;
    log.cycle = cycle;
    double reward_sum = 0.0;
    int reward_count = 0;
    int gen_updates = 0;

    for (int ep = 0; ep < h.episodes; ++ep) {
      std::vector<std::vector<TransitionRecord>> gen(N);
      std::vector<std::vector<TransitionRecord>> expert(N);
      const auto c = static_cast<std::uint64_t>(cycle);
      const auto e = static_cast<std::uint64_t>(ep);

      parallel_for(static_cast<std::size_t>(N), h.jobs, [&](std::size_t ni) {
        const int n = static_cast<int>(ni);
        auto rng = derive_rng(h.seed, {2, c, e, ni});
        auto& out = gen[n];
        for (int b = 0; b < B; ++b) {
          TransitionRecord r;
          r.obs = observation_tensor(states[n].obs);
          Tensor one = r.obs;
          one.shape.insert(one.shape.begin(), 1);
          const auto probs = policy_probs(m, one, n)[0];
          r.action = sample_action(probs, eps, rng);
          r.behavior_prob = eps / kNumActions + (1.0 - eps) * probs[static_cast<std::size_t>(r.action.id())];
          r.stream = n;
          r.t = states[n].t;
          states[n] = step(image, states[n], r.action, env);
          r.pos_after = states[n].pos;
          out.push_back(std::move(r));
        }

        const Demo& demo = *table[n][img];
        const std::size_t len = demo.rollout.actions.size();
        const std::size_t window = std::min<std::size_t>(len, static_cast<std::size_t>(B));
        std::uniform_int_distribution<std::size_t> offset(0, len - window);
        const std::size_t start = offset(rng);
        for (std::size_t t = start; t < start + window; ++t) expert[n].push_back(expert_record(image, demo, t, n, env));

        std::vector<double> rewards(out.size());
        if (h.reward_mode == RewardMode::Gail) {
          const auto ptrs = pointers(out);
          const auto o = m.critic.predict(stack_obs(ptrs), one_hot_actions(ptrs));
          const auto s = softmax_rows(o.s_logits);
          for (std::size_t i = 0; i < out.size(); ++i) rewards[i] = reward(nn::sigmoid(o.d_logit[i]), s[i], n, h.lambda1);
        } else if (h.reward_mode == RewardMode::HandDesigned) {
          const double scale = 2.0 * env.step_mag_deg;
          for (std::size_t i = 0; i < out.size(); ++i) {
            const auto t = std::min<std::size_t>(static_cast<std::size_t>(out[i].t) + 1, demo.rollout.positions.size() - 1);
            const double d = angular_distance_deg(out[i].pos_after, demo.rollout.positions[t]);
            rewards[i] = std::exp(-d * d / (2.0 * scale * scale));
          }
        } else {
          std::uniform_real_distribution<double> u(0.0, 1.0);
          for (auto& r : rewards) r = u(rng);
        }
        const auto returns = discounted_returns(rewards, h.gamma);
        for (std::size_t i = 0; i < out.size(); ++i) {
          out[i].reward = rewards[i];
          out[i].return_ = returns[i];
        }
      });

      std::vector<const TransitionRecord*> exp_batch;
      std::vector<const TransitionRecord*> gen_batch;
      for (int n = 0; n < N; ++n) {
        for (const auto& r : expert[n]) exp_batch.push_back(&r);
        for (const auto& r : gen[n]) {
          gen_batch.push_back(&r);
          reward_sum += r.reward;
          ++reward_count;
        }
      }
      auto batch_rng = derive_rng(h.seed, {3, c, e});
      cap_batch(exp_batch, static_cast<std::size_t>(h.d_batch), batch_rng);
      cap_batch(gen_batch, static_cast<std::size_t>(h.d_batch), batch_rng);

      const auto ds = update_discriminator(m, exp_batch, gen_batch);
      std::vector<const TransitionRecord*> sel_batch = gen_batch;
      sel_batch.insert(sel_batch.end(), exp_batch.begin(), exp_batch.end());
      const auto ss = update_selector(m, sel_batch);
      log.d_acc += ds.accuracy / h.episodes;
      log.sel_acc += ss.accuracy / h.episodes;

      for (int n = 0; n < N; ++n) {
        const auto ptrs = pointers(gen[n]);
        for (std::size_t s = 0; s < ptrs.size(); s += static_cast<std::size_t>(h.minibatch)) {
          const std::size_t len = std::min(ptrs.size() - s, static_cast<std::size_t>(h.minibatch));
          const auto gs = update_generator(m, std::span(ptrs).subspan(s, len));
          log.policy_loss += gs.policy_loss;
          log.value_loss += gs.value_loss;
          ++gen_updates;
        }
      }
    }

    log.mean_reward = reward_count ? reward_sum / reward_count : 0.0;
    if (gen_updates) {
      log.policy_loss /= gen_updates;
      log.value_loss /= gen_updates;
    }
    result.log.push_back(log);
    result.cycles_run = cycle + 1;
    if (on_cycle) on_cycle(log, m);

    // Stop once the windowed mean reward stops moving. Only cycles run at
    // the final exploration rate count, and the relative change must stay
    // under tolerance for a full window so a single noisy coincidence does
    // not end training.
    if (epsilon_at(h, cycle) == h.epsilon_end) reward_history.push_back(log.mean_reward);
    const int w = h.converge_window;
    if (h.early_stop && static_cast<int>(reward_history.size()) >= 2 * w) {
      const auto end = reward_history.end();
      const double recent = std::accumulate(end - w, end, 0.0) / w;
      const double before = std::accumulate(end - 2 * w, end - w, 0.0) / w;
      const bool stable = std::abs(recent - before) < h.converge_tol * std::max(std::abs(before), 1e-12);
      stable_cycles = stable ? stable_cycles + 1 : 0;
      if (stable_cycles >= w) {
        result.converged = true;
        break;
      }
    }
  }
  m.trained = true;
  return result;
}

void write_training_log(const std::filesystem::path& path, std::span<const CycleLog> log,
                        const nlohmann::json& provenance) {
  std::vector<std::vector<std::string>> rows;
  rows.reserve(log.size());
  for (const auto& l : log) {
    rows.push_back({std::to_string(l.cycle), format_number(l.mean_reward), format_number(l.d_acc),
                    format_number(l.sel_acc), format_number(l.policy_loss), format_number(l.value_loss)});
  }
  write_csv(path, {"cycle", "mean_reward", "d_acc", "sel_acc", "policy_loss", "value_loss"}, rows, provenance);
}

Rollout rollout(const GailModel& m, const EquirectImage& image, int stream, double epsilon, RolloutPolicy policy,
                std::mt19937_64& rng) {
  if (stream < 0 || stream >= m.hyper.streams) throw InputError("stream index out of range");
  const EquirectImage gray = m.env.rgb ? image : to_grayscale(image);
  Rollout r;
  r.stream = stream;
  EnvState s = reset(gray, m.env);
  r.positions.push_back(s.pos);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < m.env.steps; ++t) {
    Tensor obs = observation_tensor(s.obs);
    obs.shape.insert(obs.shape.begin(), 1);
    const auto probs = policy_probs(m, obs, stream)[0];
    ActionId a;
    if (policy == RolloutPolicy::Sample) {
      a = sample_action(probs, epsilon, rng);
    } else if (epsilon > 0.0 && u(rng) < epsilon) {
      a = ActionId(std::uniform_int_distribution<int>(0, kNumActions - 1)(rng));
    } else {
      a = ActionId(argmax(probs));
    }
    s = step(gray, s, a, m.env);
    r.actions.push_back(a);
    r.positions.push_back(s.pos);
  }
  return r;
}

Prediction predict_saliency(const GailModel& m, const EquirectImage& image, const PredictOptions& opt) {
  if (!m.trained) throw InputError("model has not been trained");
  if (image.empty()) throw InputError("empty image");
  const int w = opt.width > 0 ? opt.width : image.width;
  const int h = opt.height > 0 ? opt.height : image.height;
  const EquirectImage gray = m.env.rgb ? image : to_grayscale(image);
  Prediction p;
  p.rollouts.resize(static_cast<std::size_t>(m.hyper.streams));
  parallel_for(p.rollouts.size(), opt.jobs, [&](std::size_t n) {
    auto rng = derive_rng(opt.seed, {n});
    p.rollouts[n] = rollout(m, gray, static_cast<int>(n), 0.0, opt.policy, rng);
  });
  std::vector<SpherePoint> fix;
  for (const auto& r : p.rollouts) {
    const auto f = trajectory_to_fixations(r, opt.fixations);
    fix.insert(fix.end(), f.begin(), f.end());
  }
  p.map = render_saliency(fix, w, h);
  if (opt.use_fcb) {
    FcbParams fcb = m.fcb;
    fcb.weight = opt.fcb_weight;
    p.map = fuse_fcb(p.map, build_fcb(w, h, fcb));
  }
  return p;
}

ImitationReport evaluate_imitation(const GailModel& m, const TrainingSet& heldout, std::uint64_t seed) {
  const int N = m.hyper.streams;
  if (static_cast<int>(heldout.demos.size()) != N) throw InputError("held-out set stream count mismatch");
  ImitationReport rep;
  rep.agreement.assign(N, 0.0);
  std::vector<TransitionRecord> expert_pairs;
  std::vector<TransitionRecord> gen_pairs;
  for (int n = 0; n < N; ++n) {
    long agree = 0;
    long total = 0;
    for (const auto& d : heldout.demos[n]) {
      const EquirectImage gray = m.env.rgb ? heldout.images.at(d.image) : to_grayscale(heldout.images.at(d.image));
      std::vector<TransitionRecord> recs;
      for (std::size_t t = 0; t < d.rollout.actions.size(); ++t) recs.push_back(expert_record(gray, d, t, n, m.env));
      const auto probs = policy_probs(m, stack_obs(pointers(recs)), n);
      for (std::size_t t = 0; t < recs.size(); ++t) agree += argmax(probs[t]) == recs[t].action.id();
      total += static_cast<long>(recs.size());

      auto rng = derive_rng(seed, {static_cast<std::uint64_t>(n), d.image});
      const Rollout r = rollout(m, gray, n, 0.0, RolloutPolicy::Sample, rng);
      const std::size_t k = std::min(r.actions.size(), recs.size());
      for (std::size_t t = 0; t < k; ++t) {
        TransitionRecord g;
        g.obs = observation_tensor(observe(gray, r.positions[t], m.env));
        g.action = r.actions[t];
        g.stream = n;
        g.t = static_cast<int>(t);
        g.pos_after = r.positions[t + 1];
        gen_pairs.push_back(std::move(g));
        expert_pairs.push_back(std::move(recs[t]));
      }
    }
    rep.agreement[n] = total ? static_cast<double>(agree) / total : 0.0;
  }
  if (expert_pairs.empty()) throw InputError("held-out set has no transitions");
  long d_correct = 0;
  long s_correct = 0;
  auto score = [&](const std::vector<TransitionRecord>& pairs, bool is_expert) {
    const auto ptrs = pointers(pairs);
    const auto o = m.critic.predict(stack_obs(ptrs), one_hot_actions(ptrs));
    const auto s = softmax_rows(o.s_logits);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const bool says_expert = nn::sigmoid(o.d_logit[i]) > 0.5;
      d_correct += says_expert == is_expert;
      s_correct += argmax(s[i]) == pairs[i].stream;
    }
  };
  score(expert_pairs, true);
  score(gen_pairs, false);
  const auto total = static_cast<double>(expert_pairs.size() + gen_pairs.size());
  rep.d_acc = d_correct / total;
  rep.selector_acc = s_correct / total;
  return rep;
}

namespace {

const char* interp_name(Interp i) { return i == Interp::Nearest ? "nearest" : "bilinear"; }

nlohmann::json env_to_json(const EnvConfig& e) {
  return {{"step_mag_deg", e.step_mag_deg},
          {"steps", e.steps},
          {"fov_h_deg", e.viewport.fov_h_deg},
          {"fov_v_deg", e.viewport.fov_v_deg},
          {"out_w", e.viewport.out_w},
          {"out_h", e.viewport.out_h},
          {"interp", interp_name(e.viewport.interp)},
          {"rgb", e.rgb}};
}

EnvConfig env_from_json(const nlohmann::json& j) {
  EnvConfig e;
  e.step_mag_deg = j.at("step_mag_deg").get<double>();
  e.steps = j.at("steps").get<int>();
  e.viewport.fov_h_deg = j.at("fov_h_deg").get<double>();
  e.viewport.fov_v_deg = j.at("fov_v_deg").get<double>();
  e.viewport.out_w = j.at("out_w").get<int>();
  e.viewport.out_h = j.at("out_h").get<int>();
  e.viewport.interp = j.at("interp").get<std::string>() == "nearest" ? Interp::Nearest : Interp::Bilinear;
  e.rgb = j.at("rgb").get<bool>();
  return e;
}

TensorRefs model_tensors(GailModel& m) {
  TensorRefs refs = m.generator.tensors();
  const TensorRefs c = m.critic.tensors();
  refs.insert(refs.end(), c.begin(), c.end());
  return refs;
}

}  // namespace

void save_model(const std::filesystem::path& path, GailModel& m, const nlohmann::json& provenance) {
  nlohmann::json header = {{"format", "salgail-model"},
                           {"hyper", to_json(m.hyper)},
                           {"env", env_to_json(m.env)},
                           {"obs_channels", m.obs_channels},
                           {"fcb", {{"sigma_lon_deg", m.fcb.sigma_lon_deg},
                                    {"sigma_lat_deg", m.fcb.sigma_lat_deg},
                                    {"weight", m.fcb.weight}}},
                           {"trained", m.trained},
                           {"seed", m.hyper.seed},
                           {"generator", m.generator.spec()},
                           {"critic", m.critic.spec()}};
  if (!provenance.is_null()) header["provenance"] = provenance;
  std::vector<nn::NamedTensor> tensors;
  for (auto& [name, t] : model_tensors(m)) tensors.push_back({name, *t});
  nn::save_checkpoint(path, header, tensors);
}

GailModel load_model(const std::filesystem::path& path) {
  const nn::Checkpoint ck = nn::load_checkpoint(path);
  const auto& h = ck.header;
  if (h.value("format", "") != "salgail-model") throw InputError(path.string() + " is not a model checkpoint");
  GailModel m;
  try {
    m = make_model(apply_overrides(desk_preset(), h.at("hyper")), env_from_json(h.at("env")),
                   h.at("obs_channels").get<int>());
    const auto& f = h.at("fcb");
    m.fcb = {f.at("sigma_lon_deg").get<double>(), f.at("sigma_lat_deg").get<double>(), f.at("weight").get<double>()};
    m.trained = h.at("trained").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path.string() + ": malformed checkpoint header: " + e.what());
  }
  for (auto& [name, t] : model_tensors(m)) {
    const Tensor& src = ck.find(name);
    if (src.shape != t->shape) {
      throw InputError(path.string() + ": tensor " + name + " has shape " + src.shape_string() + ", expected " +
                       t->shape_string());
    }
    t->data = src.data;
  }
  return m;
}

}  // namespace salgail

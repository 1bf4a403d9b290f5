#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "salgail/env.hpp"
#include "salgail/networks.hpp"
#include "salgail/nn/optim.hpp"
#include "salgail/salmap.hpp"

namespace salgail {

enum class RewardMode {
  Gail,          // -log(1 - D) + lambda1 * log S(c | obs, action)
  HandDesigned,  // Gaussian of the distance to the expert's position at the same step
  Random,        // uniform [0, 1) rewards, a control
};

const char* to_string(RewardMode m);
RewardMode parse_reward_mode(const std::string& s);

struct GailHyper {
  int cycles = 2000;       // maximum training cycles H
  int episodes = 8;        // episodes per cycle I
  int episode_steps = 5;   // steps per episode B
  int streams = 2;         // N
  double gamma = 0.99;
  double lambda1 = 0.7;    // selector (mutual information) reward weight
  double lambda2 = 0.01;   // entropy offset in the policy-gradient weight
  int minibatch = 6;       // generator update batch
  int d_batch = 150;       // cap on each side of a discriminator/selector batch
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  double epsilon_decay_fraction = 0.5;
  double generator_lr = 7e-4;
  double critic_lr = 2e-4;
  double weight_decay = 2e-3;
  double generator_slope = 0.01;
  double critic_slope = 0.2;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;
  double value_coef = 0.5;
  /// Weight the policy gradient by (lambda2 + R - V) instead of (lambda2 + R).
  bool advantage = false;
  /// Rescales the generator gradient to this global L2 norm when it is
  /// larger; 0 disables clipping.
  double grad_clip = 0.0;
  /// Scales each policy-gradient term by min(1, pi(a) / mu(a)), where mu is
  /// the epsilon-mixed behaviour policy that actually drew the action.
  bool importance_weights = true;
  RewardMode reward_mode = RewardMode::Gail;
  bool early_stop = true;
  int converge_window = 10;
  double converge_tol = 1e-3;
  int obs_size = 32;
  double fov_deg = 90.0;
  std::uint64_t seed = 1;
  int jobs = 1;
};

GailHyper desk_preset();
GailHyper paper_preset();
nlohmann::json to_json(const GailHyper& h);
/// Overrides the fields present in `j`; unknown keys raise ConfigError.
GailHyper apply_overrides(GailHyper base, const nlohmann::json& j);
void validate(const GailHyper& h);

/// Steps per trajectory T = I * B.
int trajectory_steps(const GailHyper& h);
/// Linear decay from epsilon_start to epsilon_end over the first
/// epsilon_decay_fraction of the cycles, constant afterwards.
double epsilon_at(const GailHyper& h, int cycle);
EnvConfig make_env_config(const GailHyper& h, double step_mag_deg);

struct TransitionRecord {
  nn::Tensor obs;  // [C, S, S]
  ActionId action;
  int stream = 0;
  int t = 0;                 // step index within the trajectory
  SpherePoint pos_after;     // position reached by the action
  double reward = 0.0;
  double return_ = 0.0;
  /// Probability the behaviour policy gave `action`; 0 marks an on-policy
  /// sample that needs no correction.
  double behavior_prob = 0.0;
};

/// One expert demonstration: the image it was recorded on and the
/// fixed-step action sequence replayed from the front centre.
struct Demo {
  std::size_t image = 0;
  Rollout rollout;
};

struct TrainingSet {
  std::vector<EquirectImage> images;
  std::vector<std::string> image_ids;
  /// demos[n] holds stream n's demonstrations, at most one per image.
  std::vector<std::vector<Demo>> demos;
};

struct GailModel {
  GailHyper hyper;
  EnvConfig env;
  int obs_channels = 1;
  GeneratorNet generator;
  CriticNet critic;
  nn::OptimizerState generator_opt;
  nn::OptimizerState discriminator_opt;
  nn::OptimizerState selector_opt;
  FcbParams fcb;
  bool trained = false;
};

/// Freshly initialised networks and optimizer states.
GailModel make_model(const GailHyper& h, const EnvConfig& env, int obs_channels);

ActionId sample_action(std::span<const double> probs, double epsilon, std::mt19937_64& rng);

inline constexpr double kDiscriminatorClamp = 1e-6;
double reward(double d_out, std::span<const double> s_out, int stream, double lambda1);
std::vector<double> discounted_returns(std::span<const double> rewards, double gamma);

/// Stacks observations into a batch and one-hot encodes actions / streams.
nn::Tensor stack_obs(std::span<const TransitionRecord* const> batch);
nn::Tensor one_hot_actions(std::span<const TransitionRecord* const> batch);
nn::Tensor one_hot_streams(std::span<const TransitionRecord* const> batch, int streams);
nn::Tensor observation_tensor(const ImagePatch& patch);

struct DiscriminatorStep {
  double objective = 0.0;  // mean log D(expert) + mean log(1 - D(generated))
  double accuracy = 0.0;   // batch accuracy before the update
};
DiscriminatorStep update_discriminator(GailModel& m, std::span<const TransitionRecord* const> expert,
                                       std::span<const TransitionRecord* const> generated);

struct SelectorStep {
  double loss = 0.0;  // mean negative log-likelihood of the true stream
  double accuracy = 0.0;
};
SelectorStep update_selector(GailModel& m, std::span<const TransitionRecord* const> batch);

struct GeneratorStep {
  double policy_loss = 0.0;
  double value_loss = 0.0;
};
/// One RMSprop step on a batch with returns filled in.
GeneratorStep update_generator(GailModel& m, std::span<const TransitionRecord* const> batch);

/// Policy probabilities for a batch, in inference mode.
std::vector<std::vector<double>> policy_probs(const GailModel& m, const nn::Tensor& obs, int stream);

struct CycleLog {
  int cycle = 0;
  double mean_reward = 0.0;
  double d_acc = 0.0;
  double sel_acc = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
};

struct TrainResult {
  GailModel model;
  std::vector<CycleLog> log;
  int cycles_run = 0;
  bool converged = false;
};

using CycleCallback = std::function<void(const CycleLog&, const GailModel&)>;

/// The full adversarial imitation loop. Every stream must have a demo for
/// every training image.
TrainResult train(const TrainingSet& data, const GailHyper& h, const EnvConfig& env,
                  const CycleCallback& on_cycle = {});

void write_training_log(const std::filesystem::path& path, std::span<const CycleLog> log,
                        const nlohmann::json& provenance = nullptr);

enum class RolloutPolicy { Sample, Argmax };

/// Runs one stream for env.steps steps with exploration rate epsilon.
Rollout rollout(const GailModel& m, const EquirectImage& image, int stream, double epsilon,
                RolloutPolicy policy, std::mt19937_64& rng);

struct PredictOptions {
  int width = 0;   // output size; 0 uses the image size
  int height = 0;
  bool use_fcb = true;
  double fcb_weight = kDefaultFcbWeight;
  FixationMode fixations = FixationMode::AllSteps;
  RolloutPolicy policy = RolloutPolicy::Sample;
  std::uint64_t seed = 1;
  int jobs = 1;
};

struct Prediction {
  SaliencyMap map;
  std::vector<Rollout> rollouts;
};

/// Rolls out every stream without exploration, renders the visited
/// positions and fuses the front-centre bias.
Prediction predict_saliency(const GailModel& m, const EquirectImage& image, const PredictOptions& opt);

struct ImitationReport {
  std::vector<double> agreement;  // per stream, argmax policy vs expert action on expert states
  double selector_acc = 0.0;      // on held-out expert and generated pairs
  double d_acc = 0.0;             // balanced expert/generated held-out pairs, threshold 0.5
  // Generated pairs come from the policy itself (epsilon 0, sampled), as
  // deployed by predict_saliency.
};

ImitationReport evaluate_imitation(const GailModel& m, const TrainingSet& heldout, std::uint64_t seed);

void save_model(const std::filesystem::path& path, GailModel& m, const nlohmann::json& provenance = nullptr);
GailModel load_model(const std::filesystem::path& path);

/// Deterministic generator derived from a seed and a path of indices.
std::mt19937_64 derive_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> path);

}  // namespace salgail

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "salgail/error.hpp"
#include "salgail/gail.hpp"
#include "salgail/io.hpp"
#include "salgail/synth.hpp"

using namespace salgail;

namespace {

GailHyper tiny_hyper(int streams = 2) {
  GailHyper h;
  h.streams = streams;
  h.obs_size = 20;
  h.episodes = 2;
  h.episode_steps = 3;
  h.cycles = 4;
  return h;
}

GailModel tiny_model(const GailHyper& h) { return make_model(h, make_env_config(h, 4.0), 1); }

TransitionRecord record(int size, int action, int stream, double fill, std::mt19937_64* rng = nullptr) {
  TransitionRecord r;
  r.obs = nn::Tensor({1, size, size}, fill);
  if (rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto& v : r.obs.data) v = u(*rng);
  }
  r.action = ActionId(action);
  r.stream = stream;
  return r;
}

std::vector<const TransitionRecord*> ptrs(const std::vector<TransitionRecord>& v) {
  std::vector<const TransitionRecord*> out;
  for (const auto& r : v) out.push_back(&r);
  return out;
}

// Generator parameters end with policy weight, policy bias, value weight, value bias.
nn::Parameter& policy_bias(GailModel& m) {
  auto p = m.generator.parameters();
  return *p[p.size() - 3];
}
nn::Parameter& value_bias(GailModel& m) { return *m.generator.parameters().back(); }

double entropy(const std::vector<double>& p) {
  double h = 0;
  for (double v : p)
    if (v > 0) h -= v * std::log(v);
  return h;
}

TrainingSet stay_task(int images, const EnvConfig& env, std::mt19937_64& rng) {
  TrainingSet set;
  set.demos.resize(1);
  for (int i = 0; i < images; ++i) {
    set.images.push_back(synth::noise_image(96, 48, rng));
    set.image_ids.push_back("img" + std::to_string(i));
    set.demos[0].push_back({static_cast<std::size_t>(i), synth::scripted_expert(synth::ExpertKind::Stay, env)});
  }
  return set;
}

}  // namespace

TEST_SUITE("gail") {
  TEST_CASE("sample_action: epsilon 1 is uniform (chi-square)") {
    std::mt19937_64 rng(1);
    std::vector<double> peaked(9, 0.0);
    peaked[4] = 1.0;
    std::vector<int> counts(9, 0);
    const int n = 100000;
    for (int i = 0; i < n; ++i) ++counts[sample_action(peaked, 1.0, rng).id()];
    double chi2 = 0;
    for (int c : counts) chi2 += (c - n / 9.0) * (c - n / 9.0) / (n / 9.0);
    CHECK(chi2 < 26.12);  // 99.9th percentile, 8 degrees of freedom
  }

  TEST_CASE("sample_action: epsilon 0 with a one-hot policy always picks it") {
    std::mt19937_64 rng(2);
    std::vector<double> p(9, 0.0);
    p[7] = 1.0;
    for (int i = 0; i < 1000; ++i) CHECK(sample_action(p, 0.0, rng).id() == 7);
  }

  TEST_CASE("sample_action: epsilon 0.5 mixes uniform and policy") {
    std::mt19937_64 rng(3);
    const std::vector<double> p{0.4, 0.3, 0.1, 0.05, 0.05, 0.04, 0.03, 0.02, 0.01};
    std::vector<int> counts(9, 0);
    const int n = 100000;
    for (int i = 0; i < n; ++i) ++counts[sample_action(p, 0.5, rng).id()];
    for (int a = 0; a < 9; ++a) {
      const double q = 0.5 / 9.0 + 0.5 * p[a];
      const double sd = std::sqrt(n * q * (1 - q));
      CHECK(std::abs(counts[a] - n * q) < 3.0 * sd + 1.0);
    }
  }

  TEST_CASE("sample_action rejects invalid distributions") {
    std::mt19937_64 rng(4);
    CHECK_THROWS_AS(sample_action(std::vector<double>(8, 1.0 / 8), 0.0, rng), InputError);
    CHECK_THROWS_AS(sample_action(std::vector<double>(9, 0.2), 0.0, rng), NumericalError);
    std::vector<double> nan(9, 1.0 / 9);
    nan[0] = std::nan("");
    CHECK_THROWS_AS(sample_action(nan, 0.0, rng), NumericalError);
    CHECK_THROWS_AS(sample_action(std::vector<double>(9, 1.0 / 9), 1.5, rng), ConfigError);
  }

  TEST_CASE("reward examples and limits") {
    const std::vector<double> sure{1.0, 0.0};
    CHECK(reward(0.5, sure, 0, 0.7) == doctest::Approx(0.6931).epsilon(1e-4));
    CHECK(std::abs(reward(0.0, sure, 0, 0.7)) < 1e-5);
    const std::vector<double> s{0.3, 0.7};
    CHECK(reward(0.8, s, 1, 0.0) == doctest::Approx(-std::log(0.2)));
    CHECK(reward(0.8, s, 1, 0.5) == doctest::Approx(-std::log(0.2) + 0.5 * std::log(0.7)));
    for (double d : {0.0, 1.0, 1e-300, 1.0 - 1e-17})
      for (double sv : {0.0, 1e-300, 1.0}) CHECK(std::isfinite(reward(d, std::vector<double>{sv, 1 - sv}, 0, 0.7)));
    CHECK_THROWS_AS(reward(0.5, sure, 2, 0.7), InputError);
  }

  TEST_CASE("discounted returns") {
    const std::vector<double> r{0.3, -1.0, 2.0, 0.5, 0.25};
    CHECK(discounted_returns(r, 0.0) == r);
    CHECK(discounted_returns(std::vector<double>(5, 1.0), 1.0) == std::vector<double>{5, 4, 3, 2, 1});
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-2, 2);
    std::vector<double> x(12);
    for (auto& v : x) v = u(rng);
    const auto got = discounted_returns(x, 0.99);
    for (std::size_t t = 0; t < x.size(); ++t) {
      double direct = 0;
      for (std::size_t b = t; b < x.size(); ++b) direct += std::pow(0.99, double(b - t)) * x[b];
      CHECK(std::abs(got[t] - direct) < 1e-12);
    }
    CHECK(got.back() == x.back());
    CHECK_THROWS_AS(discounted_returns(std::vector<double>{}, 0.9), InputError);
  }

  TEST_CASE("discounted returns are linear in the rewards") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<double> r(9), scaled(9);
    const double alpha = -2.75;
    for (std::size_t i = 0; i < r.size(); ++i) {
      r[i] = u(rng);
      scaled[i] = alpha * r[i];
    }
    const auto a = discounted_returns(r, 0.9), b = discounted_returns(scaled, 0.9);
    for (std::size_t i = 0; i < r.size(); ++i) CHECK(b[i] == doctest::Approx(alpha * a[i]).epsilon(1e-12));
  }

  TEST_CASE("epsilon schedule is linear then flat") {
    GailHyper h;
    h.cycles = 100;
    CHECK(epsilon_at(h, 0) == doctest::Approx(1.0));
    CHECK(epsilon_at(h, 25) == doctest::Approx(1.0 - 0.95 * 0.5));
    CHECK(epsilon_at(h, 50) == doctest::Approx(0.05));
    CHECK(epsilon_at(h, 99) == doctest::Approx(0.05));
  }

  TEST_CASE("hyperparameter presets, overrides and validation") {
    const auto p = paper_preset();
    CHECK(p.cycles == 50000);
    CHECK(p.episodes == 42);
    CHECK(p.episode_steps == 5);
    CHECK(p.streams == 30);
    CHECK(p.lambda1 == 0.7);
    CHECK(p.lambda2 == 0.01);
    CHECK(p.minibatch == 6);
    CHECK(p.d_batch == 150);
    CHECK(p.generator_lr == 7e-4);
    CHECK(p.critic_lr == 2e-4);
    CHECK(p.weight_decay == 2e-3);
    CHECK(trajectory_steps(p) == 210);
    const auto back = apply_overrides(desk_preset(), to_json(p));
    CHECK(to_json(back) == to_json(p));
    CHECK_THROWS_AS(apply_overrides(desk_preset(), {{"no_such_key", 1}}), ConfigError);
    CHECK_THROWS_AS(apply_overrides(desk_preset(), {{"gamma", "high"}}), ConfigError);
    GailHyper bad;
    bad.gamma = 0.0;
    CHECK_THROWS_AS(validate(bad), ConfigError);
    bad = GailHyper{};
    bad.lambda1 = -1;
    CHECK_THROWS_AS(validate(bad), ConfigError);
    bad = GailHyper{};
    bad.obs_size = 12;
    CHECK_THROWS_AS(validate(bad), ConfigError);
  }

  TEST_CASE("discriminator: objective at D = 0.5 and training progress") {
    auto h = tiny_hyper();
    auto m = tiny_model(h);
    auto dp = m.critic.discriminator_parameters();
    dp[dp.size() - 2]->value.fill(0.0);
    dp.back()->value.fill(0.0);
    std::vector<TransitionRecord> ex, gen;
    for (int i = 0; i < 6; ++i) {
      ex.push_back(record(20, 1, 0, 0.9));
      gen.push_back(record(20, 5, 0, 0.1));
    }
    const auto first = update_discriminator(m, ptrs(ex), ptrs(gen));
    CHECK(first.objective == doctest::Approx(2.0 * std::log(0.5)));
    DiscriminatorStep last;
    for (int i = 0; i < 100; ++i) last = update_discriminator(m, ptrs(ex), ptrs(gen));
    CHECK(last.objective > first.objective + 0.5);
    CHECK(last.accuracy == 1.0);
    CHECK(last.objective <= 0.0);
    CHECK_THROWS_AS(update_discriminator(m, ptrs(ex), {}), InputError);
  }

  TEST_CASE("discriminator: swapping expert and generated batches swaps the two terms") {
    auto h = tiny_hyper();
    std::mt19937_64 rng(18);
    std::vector<TransitionRecord> ex, gen;
    for (int i = 0; i < 5; ++i) {
      ex.push_back(record(20, i, 0, 0.0, &rng));
      gen.push_back(record(20, 8 - i, 1, 0.0, &rng));
    }
    std::vector<const TransitionRecord*> all = ptrs(ex);
    for (const auto& r : gen) all.push_back(&r);
    auto probe = tiny_model(h);
    const auto z = probe.critic.forward(stack_obs(all), one_hot_actions(all), true).d_logit;
    double log_d_ex = 0, log_1md_ex = 0, log_d_gen = 0, log_1md_gen = 0;
    for (int i = 0; i < 5; ++i) {
      log_d_ex += nn::log_sigmoid(z[i]) / 5;
      log_1md_ex += nn::log_sigmoid(-z[i]) / 5;
      log_d_gen += nn::log_sigmoid(z[5 + i]) / 5;
      log_1md_gen += nn::log_sigmoid(-z[5 + i]) / 5;
    }
    auto m1 = tiny_model(h), m2 = tiny_model(h);
    CHECK(update_discriminator(m1, ptrs(ex), ptrs(gen)).objective == doctest::Approx(log_d_ex + log_1md_gen).epsilon(1e-12));
    CHECK(update_discriminator(m2, ptrs(gen), ptrs(ex)).objective == doctest::Approx(log_d_gen + log_1md_ex).epsilon(1e-12));
  }

  TEST_CASE("selector: uniform over 30 streams and a confident correct head") {
    auto h = tiny_hyper(30);
    auto m = tiny_model(h);
    auto sp = m.critic.selector_parameters();
    sp[sp.size() - 2]->value.fill(0.0);
    sp.back()->value.fill(0.0);
    std::mt19937_64 rng(6);
    std::vector<TransitionRecord> batch;
    for (int i = 0; i < 8; ++i) batch.push_back(record(20, i % 9, 3, 0.0, &rng));
    CHECK(update_selector(m, ptrs(batch)).loss == doctest::Approx(std::log(30.0)));

    auto m2 = tiny_model(h);
    auto sp2 = m2.critic.selector_parameters();
    sp2[sp2.size() - 2]->value.fill(0.0);
    sp2.back()->value.fill(0.0);
    sp2.back()->value[3] = 50.0;
    const auto s = update_selector(m2, ptrs(batch));
    CHECK(s.loss < 1e-12);
    CHECK(s.accuracy == 1.0);
    CHECK_THROWS_AS(update_selector(m2, {}), InputError);
  }

  TEST_CASE("selector learns two disjoint action habits") {
    auto h = tiny_hyper();
    h.critic_lr = 2e-3;
    auto m = tiny_model(h);
    // Every observation is the same view, so only the action identifies
    // the stream; unseen views must then be classified by the action too.
    std::mt19937_64 rng(7);
    std::vector<TransitionRecord> batch;
    for (int i = 0; i < 16; ++i) batch.push_back(record(20, i % 2 == 0 ? 1 : 0, i % 2, 0.5));
    for (int i = 0; i < 150; ++i) update_selector(m, ptrs(batch));
    std::vector<TransitionRecord> fresh;
    for (int i = 0; i < 40; ++i) fresh.push_back(record(20, i % 2 == 0 ? 1 : 0, i % 2, 0.0, &rng));
    const auto out = m.critic.predict(stack_obs(ptrs(fresh)), one_hot_actions(ptrs(fresh)));
    int correct = 0;
    for (int i = 0; i < 40; ++i) correct += (out.s_logits[i * 2 + 1] > out.s_logits[i * 2]) == (i % 2 == 1);
    CHECK(correct / 40.0 > 0.9);
  }

  TEST_CASE("generator: policy gradient equals the closed form (lambda2 + R) grad log pi") {
    auto h = tiny_hyper();
    h.lambda2 = 0.01;
    auto m = tiny_model(h);
    std::mt19937_64 rng(8);
    auto r = record(20, 3, 1, 0.0, &rng);
    r.return_ = 1.7;
    nn::Tensor obs = r.obs;
    obs.shape.insert(obs.shape.begin(), 1);
    const auto pi = policy_probs(m, obs, 1)[0];
    update_generator(m, std::vector<const TransitionRecord*>{&r});
    const auto& g = policy_bias(m).grad;
    for (int k = 0; k < 9; ++k) {
      const double expected = -(0.01 + 1.7) * ((k == 3 ? 1.0 : 0.0) - pi[k]);
      CHECK(g[9 + k] == doctest::Approx(expected).epsilon(1e-9));
      CHECK(g[k] == 0.0);  // stream 0's head is untouched
    }
  }

  TEST_CASE("generator: zero value gradient when returns equal the value estimate") {
    auto h = tiny_hyper();
    auto m = tiny_model(h);
    std::mt19937_64 rng(9);
    std::vector<TransitionRecord> batch;
    for (int i = 0; i < 4; ++i) batch.push_back(record(20, i, 0, 0.0, &rng));
    const auto v = m.generator.predict(stack_obs(ptrs(batch)), one_hot_streams(ptrs(batch), 2)).value;
    for (int i = 0; i < 4; ++i) batch[i].return_ = v[i];
    const auto step = update_generator(m, ptrs(batch));
    CHECK(step.value_loss == doctest::Approx(0.0));
    for (double gv : value_bias(m).grad.data) CHECK(gv == 0.0);
  }

  TEST_CASE("generator: a large constant weight over uniformly drawn actions drifts the policy to uniform") {
    auto h = tiny_hyper();
    h.lambda2 = 1.0;
    h.generator_lr = 1e-2;
    auto m = tiny_model(h);
    policy_bias(m).value[0] = 3.0;
    std::mt19937_64 rng(10);
    const auto base = record(20, 0, 0, 0.0, &rng);
    std::vector<TransitionRecord> batch;
    for (int a = 0; a < 9; ++a) {
      auto r = base;
      r.action = ActionId(a);
      batch.push_back(r);
    }
    nn::Tensor obs = base.obs;
    obs.shape.insert(obs.shape.begin(), 1);
    const double before = entropy(policy_probs(m, obs, 0)[0]);
    for (int i = 0; i < 40; ++i) update_generator(m, ptrs(batch));
    const double after = entropy(policy_probs(m, obs, 0)[0]);
    CHECK(after > before);
    CHECK(after > std::log(9.0) - 0.05);
  }

  TEST_CASE("with lambda1 = lambda2 = gamma = 0 the policy weight is -log(1 - D)") {
    auto h = tiny_hyper();
    h.lambda1 = 0.0;
    h.lambda2 = 0.0;
    h.gamma = 1e-12;  // gamma must be > 0; this is zero to machine precision
    auto m = tiny_model(h);
    std::mt19937_64 rng(11);
    std::vector<TransitionRecord> batch;
    for (int i = 0; i < 3; ++i) batch.push_back(record(20, 2 * i, 0, 0.0, &rng));
    const auto out = m.critic.predict(stack_obs(ptrs(batch)), one_hot_actions(ptrs(batch)));
    std::vector<double> rewards;
    for (int i = 0; i < 3; ++i) {
      const double d = nn::sigmoid(out.d_logit[i]);
      const std::vector<double> s{0.5, 0.5};
      rewards.push_back(reward(d, s, 0, h.lambda1));
      CHECK(rewards.back() == doctest::Approx(-std::log(1.0 - d)).epsilon(1e-12));
    }
    const auto ret = discounted_returns(rewards, h.gamma);
    for (int i = 0; i < 3; ++i) {
      CHECK(ret[i] == doctest::Approx(rewards[i]).epsilon(1e-9));
      batch[i].return_ = ret[i];
    }
    const auto pi = policy_probs(m, stack_obs(ptrs(batch)), 0);
    update_generator(m, ptrs(batch));
    const auto& g = policy_bias(m).grad;
    for (int k = 0; k < 9; ++k) {
      double expected = 0;
      for (int i = 0; i < 3; ++i) expected -= ret[i] * ((batch[i].action.id() == k ? 1.0 : 0.0) - pi[i][k]) / 3.0;
      CHECK(g[k] == doctest::Approx(expected).epsilon(1e-9));
    }
  }

  TEST_CASE("importance weights damp actions the policy would not take") {
    auto h = tiny_hyper();
    auto m = tiny_model(h);
    std::mt19937_64 rng(12);
    auto r = record(20, 4, 0, 0.0, &rng);
    r.return_ = 1.0;
    nn::Tensor obs = r.obs;
    obs.shape.insert(obs.shape.begin(), 1);
    const double p = policy_probs(m, obs, 0)[0][4];
    r.behavior_prob = 1.0;  // drawn with certainty by exploration
    update_generator(m, std::vector<const TransitionRecord*>{&r});
    const double damped = policy_bias(m).grad[4];
    auto m2 = tiny_model(h);
    r.behavior_prob = 0.0;
    update_generator(m2, std::vector<const TransitionRecord*>{&r});
    CHECK(damped == doctest::Approx(p * policy_bias(m2).grad[4]).epsilon(1e-9));
  }

  TEST_CASE("training rejects stream/corpus mismatches") {
    auto h = tiny_hyper();
    const auto env = make_env_config(h, 4.0);
    std::mt19937_64 rng(13);
    auto set = synth::east_stay_task(2, 1, env, 64, 32, rng);
    CHECK_THROWS_AS(train(set, h, env), InputError);
    auto two = synth::east_stay_task(2, 2, env, 64, 32, rng);
    two.demos[1].pop_back();
    CHECK_THROWS_AS(train(two, h, env), InputError);
    CHECK_THROWS_AS(train(TrainingSet{}, h, env), InputError);
  }

  TEST_CASE("single stay expert is recovered on held-out images") {
    GailHyper h;
    h.streams = 1;
    h.cycles = 300;
    h.seed = 3;
    const auto env = make_env_config(h, 4.0);
    std::mt19937_64 rng(14);
    const auto train_set = stay_task(32, env, rng);
    const auto heldout = stay_task(4, env, rng);
    const auto res = train(train_set, h, env);
    CHECK(res.model.trained);
    CHECK(res.cycles_run <= 300);
    double stay = 0;
    for (const auto& img : heldout.images) {
      TransitionRecord r;
      r.obs = observation_tensor(observe(to_grayscale(img), {0, 0}, env));
      stay += policy_probs(res.model, stack_obs(std::vector<const TransitionRecord*>{&r}), 0)[0][0];
    }
    CHECK(stay / heldout.images.size() > 0.9);
    const auto rep = evaluate_imitation(res.model, heldout, 1);
    CHECK(rep.agreement[0] > 0.9);
    // Once the policy matches the expert the discriminator is at chance.
    CHECK(rep.d_acc < 0.65);
  }

  TEST_CASE("prediction is deterministic, bounded and survives a checkpoint round trip") {
    auto h = tiny_hyper();
    h.cycles = 3;
    const auto env = make_env_config(h, 4.0);
    std::mt19937_64 rng(15);
    const auto set = synth::east_stay_task(3, 2, env, 64, 32, rng);
    auto res = train(set, h, env);
    PredictOptions o;
    o.width = 72;
    o.height = 36;
    o.seed = 4;
    const auto a = predict_saliency(res.model, set.images[0], o);
    const auto b = predict_saliency(res.model, set.images[0], o);
    CHECK(a.map.values == b.map.values);
    CHECK(a.rollouts.size() == 2);
    for (double v : a.map.values) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    CHECK(a.map.max() == doctest::Approx(1.0));

    const auto dir = std::filesystem::temp_directory_path() / "salgail_gail_test";
    std::filesystem::create_directories(dir);
    save_model(dir / "m.sgail", res.model, {{"note", "test"}});
    const auto loaded = load_model(dir / "m.sgail");
    CHECK(to_json(loaded.hyper) == to_json(res.model.hyper));
    CHECK(predict_saliency(loaded, set.images[0], o).map.values == a.map.values);
    write_training_log(dir / "log.csv", res.log);
    const auto t = read_csv(dir / "log.csv");
    CHECK(t.header == std::vector<std::string>{"cycle", "mean_reward", "d_acc", "sel_acc", "policy_loss", "value_loss"});
    CHECK(t.rows.size() == res.log.size());
    std::filesystem::remove_all(dir);

    GailModel fresh = tiny_model(h);
    CHECK_THROWS_AS(predict_saliency(fresh, set.images[0], o), InputError);
  }

  TEST_CASE("alternative reward modes run and stay in range") {
    for (auto mode : {RewardMode::HandDesigned, RewardMode::Random}) {
      auto h = tiny_hyper();
      h.reward_mode = mode;
      const auto env = make_env_config(h, 4.0);
      std::mt19937_64 rng(16);
      const auto set = synth::east_stay_task(2, 2, env, 64, 32, rng);
      const auto res = train(set, h, env);
      for (const auto& l : res.log) {
        CHECK(l.mean_reward >= 0.0);
        CHECK(l.mean_reward <= 1.0);
      }
    }
    CHECK(parse_reward_mode("hand") == RewardMode::HandDesigned);
    CHECK_THROWS_AS(parse_reward_mode("bogus"), ConfigError);
  }

  TEST_CASE("derived generators are reproducible and path dependent") {
    auto a = derive_rng(5, {1, 2});
    auto b = derive_rng(5, {1, 2});
    auto c = derive_rng(5, {2, 1});
    const auto x = a();
    CHECK(x == b());
    CHECK(x != c());
  }
}

#include <fstream>

#include "salgail/cli.hpp"
#include "salgail/error.hpp"
#include "salgail/io.hpp"

namespace salgail::cli {

GailHyper preset_by_name(const std::string& name) {
  if (name == "desk") return desk_preset();
  if (name == "paper") return paper_preset();
  throw ConfigError("unknown preset '" + name + "' (expected desk or paper)");
}

nlohmann::json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": invalid JSON: " + e.what());
  }
}

namespace {

void apply_layer(Resolved& r, const nlohmann::json& layer, const std::string& origin) {
  if (layer.is_null()) return;
  if (!layer.is_object()) throw ConfigError(origin + " must be a JSON object");
  nlohmann::json hyper = nlohmann::json::object();
  for (const auto& [key, value] : layer.items()) {
    if (key == "step_mag_deg") {
      if (!value.is_number() || value.get<double>() <= 0.0) throw ConfigError(origin + ": step_mag_deg must be > 0");
      r.step_mag_deg = value.get<double>();
    } else {
      hyper[key] = value;
    }
  }
  r.hyper = apply_overrides(r.hyper, hyper);
}

}  // namespace

Resolved resolve(const Common& common, const nlohmann::json& flags) {
  Resolved r;
  r.hyper = preset_by_name(common.preset);
  if (!common.config.empty()) apply_layer(r, load_json_file(common.config), common.config);
  nlohmann::json f = flags.is_null() ? nlohmann::json::object() : flags;
  if (common.seed) f["seed"] = *common.seed;
  f["jobs"] = common.jobs;
  apply_layer(r, f, "command-line flags");
  validate(r.hyper);
  return r;
}

std::vector<std::string> hyper_table(const GailHyper& h) {
  auto line = [](const std::string& name, double v) { return name + ": " + format_number(v); };
  return {
      line("Maximum number of training cycles H", h.cycles),
      line("The number of episodes I", h.episodes),
      line("The step size of one episode B", h.episode_steps),
      line("Mini-batch size", h.minibatch),
      line("Discount factor gamma", h.gamma),
      line("Generator initial learning rate", h.generator_lr),
      line("Generator negative slope in LeakyReLU", h.generator_slope),
      line("Discriminator & policy selector initial learning rate", h.critic_lr),
      line("Discriminator & policy selector batch size", h.d_batch),
      line("Discriminator & policy selector negative slope in LeakyReLU", h.critic_slope),
      line("Numerical stability value in BatchNorm", h.bn_eps),
      line("Momentum in BatchNorm", h.bn_momentum),
      line("Weight decay", h.weight_decay),
      line("Trade-off hyperparameter for reward lambda1", h.lambda1),
      line("Causal entropy coefficient lambda2", h.lambda2),
      line("Number of streams N", h.streams),
      line("Observation size", h.obs_size),
  };
}

}  // namespace salgail::cli

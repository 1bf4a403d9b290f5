#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "salgail/analysis.hpp"
#include "salgail/cli.hpp"
#include "salgail/error.hpp"
#include "salgail/io.hpp"
#include "salgail/metrics.hpp"
#include "salgail/parallel.hpp"
#include "salgail/synth.hpp"

namespace fs = std::filesystem;

namespace salgail::cli {

namespace {

std::vector<fs::path> list_files(const fs::path& dir, std::initializer_list<std::string_view> exts) {
  if (!fs::is_directory(dir)) throw InputError(dir.string() + " is not a directory");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto ext = e.path().extension().string();
    if (std::find(exts.begin(), exts.end(), ext) != exts.end()) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<fs::path> files_or_dir(const fs::path& p, std::initializer_list<std::string_view> exts) {
  if (fs::is_regular_file(p)) return {p};
  return list_files(p, exts);
}

void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw InputError("cannot create directory " + p.string() + ": " + ec.message());
}

/// Image id of a per-subject file: the part before "__s<k>", else the stem.
std::string image_id_of(const fs::path& p) {
  if (auto n = parse_trajectory_filename(p)) return n->image_id;
  return p.stem().string();
}

void write_map_outputs(const fs::path& dir, const std::string& id, const SaliencyMap& m,
                       const nlohmann::json& prov) {
  write_map_raw(dir / (id + ".f32"), m, {{"provenance", prov}});
  write_map_png(dir / (id + ".png"), m, {{"provenance", prov}});
  write_png(dir / (id + "_heat.png"), heatmap(m), {{"provenance", prov}});
}

// ---------------------------------------------------------------- ivt

struct IvtArgs {
  std::string in;
  std::string out;
  double threshold = kIvtThresholdDegPerSec;
};

int cmd_ivt(const IvtArgs& a, const Common& c, std::ostream& out, std::ostream& err) {
  const auto files = list_files(a.in, {".csv"});
  if (files.empty()) {
    err << "warning: no .csv files in " << a.in << "\n";
    out << "processed 0 files\n";
    return kExitOk;
  }
  if (!(a.threshold > 0.0)) throw ConfigError("threshold must be > 0");
  ensure_dir(a.out);
  const auto prov = make_provenance({{"command", "ivt"}, {"threshold", a.threshold}});
  std::vector<std::string> errors(files.size());
  std::vector<std::array<long, 3>> counts(files.size(), {0, 0, 0});
  parallel_for(files.size(), c.jobs, [&](std::size_t i) {
    try {
      const auto samples = read_trajectory_csv(files[i]);
      LabeledTrajectory t = ivt_classify(samples, a.threshold);
      if (auto n = parse_trajectory_filename(files[i])) {
        t.subject_id = n->subject_id;
        t.image_id = n->image_id;
      }
      for (const auto& s : t.samples) ++counts[i][static_cast<int>(s.label)];
      write_labeled_csv(fs::path(a.out) / files[i].filename(), t, prov);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  long fixations = 0;
  long saccades = 0;
  std::vector<std::string> bad;
  for (std::size_t i = 0; i < files.size(); ++i) {
    if (!errors[i].empty()) {
      bad.push_back(files[i].filename().string() + ": " + errors[i]);
      continue;
    }
    fixations += counts[i][static_cast<int>(SampleLabel::Fixation)];
    saccades += counts[i][static_cast<int>(SampleLabel::Saccade)];
  }
  out << "processed " << files.size() - bad.size() << " files: " << fixations << " fixation, " << saccades
      << " saccade samples\n";
  if (!bad.empty()) {
    err << "malformed input files:\n";
    for (const auto& b : bad) err << "  " << b << "\n";
    return kExitInput;
  }
  return kExitOk;
}

// ---------------------------------------------------------------- salmap

struct SalmapArgs {
  std::string fixations;
  std::string out;
  int width = 360;
  int height = 180;
  bool no_fcb = false;
  double fcb_weight = kDefaultFcbWeight;
  std::optional<double> sigma_lon;
  std::optional<double> sigma_lat;
};

std::map<std::string, std::vector<SpherePoint>> read_grouped_fixations(const fs::path& src) {
  std::map<std::string, std::vector<SpherePoint>> by_image;
  for (const auto& f : files_or_dir(src, {".csv"})) {
    auto pts = read_fixations_file(f);
    auto& dst = by_image[image_id_of(f)];
    dst.insert(dst.end(), pts.begin(), pts.end());
  }
  return by_image;
}

int cmd_salmap(const SalmapArgs& a, const Common& c, std::ostream& out, std::ostream& err) {
  if (a.width < 1 || a.height < 1) throw ConfigError("map size must be positive");
  const auto by_image = read_grouped_fixations(a.fixations);
  if (by_image.empty()) {
    err << "warning: no fixation files found in " << a.fixations << "\n";
    return kExitOk;
  }
  FcbParams fcb;
  if (!a.no_fcb) {
    std::vector<SpherePoint> all;
    for (const auto& [id, pts] : by_image) all.insert(all.end(), pts.begin(), pts.end());
    if (all.size() >= 10) fcb = fit_fcb(all);
    if (a.sigma_lon) fcb.sigma_lon_deg = *a.sigma_lon;
    if (a.sigma_lat) fcb.sigma_lat_deg = *a.sigma_lat;
    if (!(fcb.sigma_lon_deg > 0.0 && fcb.sigma_lat_deg > 0.0)) throw ConfigError("FCB sigmas must be > 0");
    if (a.fcb_weight < 0.0) throw ConfigError("FCB weight must be >= 0");
    fcb.weight = a.fcb_weight;
  }
  ensure_dir(a.out);
  nlohmann::json cfg = {{"command", "salmap"}, {"width", a.width}, {"height", a.height}, {"fcb", !a.no_fcb}};
  if (!a.no_fcb) cfg["fcb_params"] = {fcb.sigma_lon_deg, fcb.sigma_lat_deg, fcb.weight};
  const auto prov = make_provenance(cfg);
  std::vector<std::pair<std::string, const std::vector<SpherePoint>*>> items;
  for (const auto& [id, pts] : by_image) items.emplace_back(id, &pts);
  parallel_for(items.size(), c.jobs, [&](std::size_t i) {
    SaliencyMap m = render_saliency(*items[i].second, a.width, a.height);
    if (!a.no_fcb) m = fuse_fcb(m, build_fcb(a.width, a.height, fcb));
    write_map_outputs(a.out, items[i].first, m, prov);
  });
  out << "wrote " << items.size() << " maps (" << a.width << "x" << a.height << ", fcb "
      << (a.no_fcb ? "off" : "on") << ")\n";
  return kExitOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string pred;
  std::string gt;
  std::string fixations;
  std::string out;
};

std::string mean_std(const std::vector<double>& xs) {
  const double n = static_cast<double>(xs.size());
  double mean = 0.0;
  for (double x : xs) mean += x / n;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  const double sd = xs.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  std::ostringstream s;
  s.precision(4);
  s << std::fixed << mean << " (" << sd << ")";
  return s.str();
}

int cmd_eval(const EvalArgs& a, const Common& c, std::ostream& out, std::ostream&) {
  const auto preds = list_files(a.pred, {".f32"});
  if (preds.empty()) throw InputError("no .f32 prediction maps in " + a.pred);
  std::map<std::string, std::vector<fs::path>> fix_files;
  for (const auto& f : list_files(a.fixations, {".csv"})) fix_files[image_id_of(f)].push_back(f);
  for (const auto& p : preds) {
    const std::string id = p.stem().string();
    const fs::path gt = fs::path(a.gt) / (id + ".f32");
    if (!fs::exists(gt)) throw InputError("missing ground-truth map " + gt.string());
    if (!fix_files.count(id)) throw InputError("missing fixations for image " + id + " in " + a.fixations);
  }
  std::vector<MetricReport> reports(preds.size());
  parallel_for(preds.size(), c.jobs, [&](std::size_t i) {
    const std::string id = preds[i].stem().string();
    const SaliencyMap pred = read_map_raw(preds[i]);
    const SaliencyMap gt = read_map_raw(fs::path(a.gt) / (id + ".f32"));
    std::vector<SpherePoint> fix;
    for (const auto& f : fix_files.at(id)) {
      const auto pts = read_fixations_file(f);
      fix.insert(fix.end(), pts.begin(), pts.end());
    }
    if (fix.empty()) throw InputError("image " + id + " has no fixations");
    if (pred.width != gt.width || pred.height != gt.height) {
      throw InputError("prediction and ground truth differ in size for image " + id);
    }
    const auto px = fixation_pixels(fix, pred.width, pred.height);
    reports[i] = evaluate(pred, gt, px);
  });
  std::vector<std::vector<std::string>> rows;
  std::vector<double> ccs, kls, nsss, aucs;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto& r = reports[i];
    rows.push_back({preds[i].stem().string(), format_number(r.cc), format_number(r.kl), format_number(r.nss),
                    format_number(r.auc)});
    ccs.push_back(r.cc);
    kls.push_back(r.kl);
    nsss.push_back(r.nss);
    aucs.push_back(r.auc);
  }
  rows.push_back({"mean (std)", mean_std(ccs), mean_std(kls), mean_std(nsss), mean_std(aucs)});
  const auto prov = make_provenance({{"command", "eval"}});
  const fs::path out_path = a.out.empty() ? fs::path("metrics.csv") : fs::path(a.out);
  if (out_path.has_parent_path()) ensure_dir(out_path.parent_path());
  write_csv(out_path, {"image_id", "cc", "kl", "nss", "auc"}, rows, prov);
  out << "evaluated " << preds.size() << " images; CC " << rows.back()[1] << ", KL " << rows.back()[2] << ", NSS "
      << rows.back()[3] << ", AUC " << rows.back()[4] << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- manifest

struct LoadedManifest {
  TrainingSet set;
  std::optional<double> step_mag_deg;
  nlohmann::json raw;
};

LoadedManifest load_manifest(const fs::path& path, std::optional<double> step_override) {
  LoadedManifest lm;
  try {
    lm.raw = load_json_file(path);
  } catch (const ConfigError& e) {
    throw InputError(e.what());  // a broken manifest is bad input, not bad settings
  }
  const fs::path base = path.parent_path();
  const auto& j = lm.raw;
  try {
    const int streams = j.at("streams").get<int>();
    if (streams < 1) throw InputError(path.string() + ": streams must be >= 1");
    std::map<std::string, std::size_t> index;
    for (const auto& im : j.at("images")) {
      const std::string id = im.at("id").get<std::string>();
      index[id] = lm.set.images.size();
      lm.set.images.push_back(load_image(base / im.at("file").get<std::string>()));
      lm.set.image_ids.push_back(id);
    }
    if (j.contains("step_mag_deg")) lm.step_mag_deg = j.at("step_mag_deg").get<double>();
    if (step_override) lm.step_mag_deg = step_override;

    // Raw trajectories fix the step magnitude when none is given.
    std::vector<LabeledTrajectory> raw_trajs;
    std::vector<std::tuple<int, std::size_t, std::vector<HmSample>>> pending;
    lm.set.demos.resize(static_cast<std::size_t>(streams));
    for (const auto& d : j.at("demos")) {
      const int s = d.at("stream").get<int>();
      if (s < 0 || s >= streams) throw InputError(path.string() + ": demo stream out of range");
      const std::string id = d.at("image").get<std::string>();
      if (!index.count(id)) throw InputError(path.string() + ": demo refers to unknown image " + id);
      if (d.contains("rollout")) {
        auto rs = read_rollouts_csv(base / d.at("rollout").get<std::string>());
        if (rs.size() != 1) throw InputError(path.string() + ": rollout files must hold one stream");
        lm.set.demos[s].push_back({index[id], std::move(rs.front())});
      } else {
        auto samples = read_trajectory_csv(base / d.at("trajectory").get<std::string>());
        raw_trajs.push_back(ivt_classify(samples));
        pending.emplace_back(s, index[id], std::move(samples));
      }
    }
    if (!pending.empty() && !lm.step_mag_deg) lm.step_mag_deg = mean_step_magnitude(raw_trajs);
    for (auto& [s, img, samples] : pending) {
      lm.set.demos[s].push_back({img, rollout_from_trajectory(samples, *lm.step_mag_deg)});
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path.string() + ": malformed manifest: " + e.what());
  }
  return lm;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string manifest;
  std::string out;
  nlohmann::json flags = nlohmann::json::object();
};

int cmd_train(const TrainArgs& a, const Common& c, std::ostream& out, std::ostream& err) {
  if (!c.seed && (c.config.empty() || !load_json_file(c.config).contains("seed"))) {
    throw ConfigError("train requires --seed");
  }
  const Resolved r = resolve(c, a.flags);
  const LoadedManifest lm = load_manifest(a.manifest, r.step_mag_deg);
  const double step_mag = lm.step_mag_deg.value_or(4.0);
  const EnvConfig env = make_env_config(r.hyper, step_mag);

  out << "salgail train (preset " << c.preset << ")\n";
  for (const auto& line : hyper_table(r.hyper)) out << "  " << line << "\n";
  out << "  HM step magnitude (deg): " << format_number(step_mag) << "\n";
  out << "  Steps per trajectory T: " << env.steps << "\n";
  if (c.preset == "paper") err << "warning: the paper preset trains for days on a CPU\n";

  ensure_dir(a.out);
  const nlohmann::json cfg = {{"command", "train"}, {"hyper", to_json(r.hyper)}, {"step_mag_deg", step_mag},
                              {"manifest", lm.raw}};
  const auto prov = make_provenance(cfg);
  const int every = std::max(1, r.hyper.cycles / 20);
  auto result = train(lm.set, r.hyper, env, [&](const CycleLog& l, const GailModel&) {
    if (l.cycle % every == 0) {
      out << "cycle " << l.cycle << " reward " << format_number(l.mean_reward) << " d_acc "
          << format_number(l.d_acc) << " sel_acc " << format_number(l.sel_acc) << "\n";
    }
  });
  save_model(fs::path(a.out) / "model.sgail", result.model, prov);
  write_training_log(fs::path(a.out) / "training_log.csv", result.log, prov);
  out << "trained " << result.cycles_run << " cycles" << (result.converged ? " (rewards converged)" : "") << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string model;
  std::string images;
  std::string out;
  int width = 0;
  int height = 0;
  bool no_fcb = false;
  double fcb_weight = kDefaultFcbWeight;
  std::string fixation_mode = "all";
  bool argmax = false;
};

int cmd_simulate(const SimulateArgs& a, const Common& c, std::ostream& out, std::ostream&) {
  if (!c.seed) throw ConfigError("simulate requires --seed");
  if (a.fixation_mode != "all" && a.fixation_mode != "stay") throw ConfigError("--fixation-mode must be all or stay");
  const GailModel m = load_model(a.model);
  const auto images = files_or_dir(a.images, {".png", ".f32"});
  if (images.empty()) throw InputError("no images in " + a.images);
  ensure_dir(a.out);
  PredictOptions opt;
  opt.width = a.width;
  opt.height = a.height;
  opt.use_fcb = !a.no_fcb;
  opt.fcb_weight = a.fcb_weight;
  opt.fixations = a.fixation_mode == "stay" ? FixationMode::StayOnly : FixationMode::AllSteps;
  opt.policy = a.argmax ? RolloutPolicy::Argmax : RolloutPolicy::Sample;
  opt.seed = *c.seed;
  opt.jobs = c.jobs;
  const auto prov = make_provenance({{"command", "simulate"},
                                     {"seed", *c.seed},
                                     {"width", a.width},
                                     {"height", a.height},
                                     {"fcb", !a.no_fcb},
                                     {"fcb_weight", a.fcb_weight},
                                     {"fixation_mode", a.fixation_mode},
                                     {"argmax", a.argmax},
                                     {"model_hash", fnv1a64(std::string(std::istreambuf_iterator<char>(
                                                                        std::ifstream(a.model, std::ios::binary).rdbuf()),
                                                                    {}))}});
  for (const auto& path : images) {
    const Prediction p = predict_saliency(m, load_image(path), opt);
    const std::string id = path.stem().string();
    write_map_outputs(a.out, id, p.map, prov);
    write_rollouts_csv(fs::path(a.out) / (id + "_rollouts.csv"), p.rollouts, prov);
  }
  out << "simulated " << images.size() << " images with " << m.hyper.streams << " streams\n";
  return kExitOk;
}

// ---------------------------------------------------------------- findings

struct FindingsArgs {
  std::string input;
  std::string out;
  int reps = 20;
  int width = 360;
  int height = 180;
};

int cmd_findings(const FindingsArgs& a, const Common& c, std::ostream& out, std::ostream& err) {
  const auto files = list_files(a.input, {".csv"});
  if (files.empty()) throw InputError("no .csv files in " + a.input);
  std::map<std::string, std::map<int, std::vector<SpherePoint>>> grouped;
  std::vector<LabeledTrajectory> trajs;
  int next_subject = 0;
  for (const auto& f : files) {
    auto name = parse_trajectory_filename(f);
    const std::string image = name ? name->image_id : f.stem().string();
    const int subject = name ? name->subject_id : next_subject++;
    grouped[image][subject] = read_fixations_file(f);
    const CsvTable t = read_csv(f);
    if (t.column("t_ms") >= 0) {
      LabeledTrajectory lt = ivt_classify(read_trajectory_csv(f));
      lt.subject_id = subject;
      lt.image_id = image;
      trajs.push_back(std::move(lt));
    }
  }
  FixationCorpus corpus;
  for (auto& [image, subjects] : grouped) {
    corpus.image_ids.push_back(image);
    std::vector<std::vector<SpherePoint>> per;
    for (auto& [id, pts] : subjects) per.push_back(std::move(pts));
    corpus.fixations.push_back(std::move(per));
  }
  ensure_dir(a.out);
  const auto prov = make_provenance({{"command", "findings"}, {"reps", a.reps}, {"seed", c.seed.value_or(1)}});
  const fs::path dir(a.out);

  bool have_split = true;
  for (const auto& img : corpus.fixations) have_split = have_split && img.size() >= 2;
  if (have_split) {
    auto rng = derive_rng(c.seed.value_or(1), {});
    const auto curve = split_half_cc(corpus, {a.reps, a.width, a.height}, rng);
    write_split_half_csv(dir / "split_half.csv", curve, prov);
    out << "split-half CC at k=1: " << format_number(curve.mean_cc.front()) << " (control "
        << format_number(curve.control_cc.front()) << ")\n";
  } else {
    err << "warning: split-half analysis skipped (needs >= 2 subjects per image)\n";
  }

  const auto hist = fixation_histograms(corpus);
  std::vector<double> lon_c, lat_c;
  for (int b = 0; b < kHistogramBins; ++b) {
    lon_c.push_back(lon_bin_center(b));
    lat_c.push_back(lat_bin_center(b));
  }
  write_histogram_csv(dir / "lon_hist.csv", lon_c, hist.lon, prov);
  write_histogram_csv(dir / "lat_hist.csv", lat_c, hist.lat, prov);
  std::vector<std::vector<std::string>> grid_rows;
  for (int la = 0; la < kHistogramBins; ++la) {
    for (int lo = 0; lo < kHistogramBins; ++lo) {
      const long n = hist.grid[static_cast<std::size_t>(la) * kHistogramBins + lo];
      if (n) grid_rows.push_back({format_number(lat_bin_center(la)), format_number(lon_bin_center(lo)), std::to_string(n)});
    }
  }
  write_csv(dir / "grid.csv", {"lat_center", "lon_center", "count"}, grid_rows, prov);
  out << "histogrammed " << hist.total << " fixations\n";

  if (!trajs.empty()) {
    const auto mags = magnitude_distribution(trajs);
    std::vector<std::vector<std::string>> rows;
    std::vector<std::vector<std::string>> hrows;
    for (const auto& m : mags) {
      rows.push_back({std::to_string(m.subject_id), format_number(m.mean), format_number(m.lo95),
                      format_number(m.hi95), std::to_string(m.magnitudes_deg.size())});
      for (std::size_t b = 0; b < m.histogram.size(); ++b) {
        hrows.push_back({std::to_string(m.subject_id), format_number((b + 0.5) * m.bin_deg),
                         std::to_string(m.histogram[b])});
      }
    }
    write_csv(dir / "magnitudes.csv", {"subject_id", "mean_deg", "lo95_deg", "hi95_deg", "steps"}, rows, prov);
    write_csv(dir / "magnitude_hist.csv", {"subject_id", "bin_center", "count"}, hrows, prov);
    out << "magnitude intervals for " << mags.size() << " subjects\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  std::string kind = "east-stay";
  std::string out;
  int experts = 2;
  int images = 8;
  int subjects = 10;
  int width = 160;
  int height = 80;
  nlohmann::json flags = nlohmann::json::object();
};

int synth_trajectories(const SynthArgs& a, std::mt19937_64& rng, const nlohmann::json& prov, std::ostream& out) {
  const fs::path dir = fs::path(a.out) / "trajectories";
  ensure_dir(dir);
  nlohmann::json files = nlohmann::json::array();
  long totals[3] = {0, 0, 0};
  for (int i = 0; i < a.images; ++i) {
    for (int s = 0; s < a.subjects; ++s) {
      const auto tr = synth::ivt_trace(12, 5, 20, 50.0, rng);
      const std::string name = trajectory_filename("odi" + std::to_string(i), s);
      write_trajectory_csv(dir / name, tr.samples, prov);
      long counts[3] = {0, 0, 0};
      for (auto l : tr.labels) ++counts[static_cast<int>(l)];
      for (int k = 0; k < 3; ++k) totals[k] += counts[k];
      files.push_back({{"file", "trajectories/" + name},
                       {"first", counts[0]},
                       {"fixation", counts[1]},
                       {"saccade", counts[2]}});
    }
  }
  const nlohmann::json manifest = {{"kind", "trajectories"},
                                   {"threshold", kIvtThresholdDegPerSec},
                                   {"files", files},
                                   {"totals", {{"first", totals[0]}, {"fixation", totals[1]}, {"saccade", totals[2]}}},
                                   {"provenance", prov}};
  std::ofstream(fs::path(a.out) / "manifest.json") << manifest.dump(2) << "\n";
  out << "wrote " << files.size() << " labelled traces (" << totals[1] << " fixation, " << totals[2]
      << " saccade samples)\n";
  return kExitOk;
}

int synth_fixations(const SynthArgs& a, std::mt19937_64& rng, const nlohmann::json& prov, std::ostream& out) {
  const fs::path dir = fs::path(a.out) / "fixations";
  ensure_dir(dir);
  FixationCorpus corpus;
  if (a.kind == "attractor") {
    corpus = synth::shared_attractor_corpus(a.images, a.subjects, 30, {}, rng);
  } else {
    for (int i = 0; i < a.images; ++i) {
      corpus.image_ids.push_back("fcb" + std::to_string(i));
      std::vector<std::vector<SpherePoint>> per;
      for (int s = 0; s < a.subjects; ++s) per.push_back(synth::fcb_cloud(30, 30.0, 12.0, rng));
      corpus.fixations.push_back(std::move(per));
    }
  }
  for (std::size_t i = 0; i < corpus.fixations.size(); ++i) {
    for (std::size_t s = 0; s < corpus.fixations[i].size(); ++s) {
      std::vector<std::vector<std::string>> rows;
      for (const auto& p : corpus.fixations[i][s]) rows.push_back({format_number(p.lat), format_number(p.lon)});
      write_csv(dir / trajectory_filename(corpus.image_ids[i], static_cast<int>(s)), {"lat", "lon"}, rows, prov);
    }
  }
  const nlohmann::json manifest = {{"kind", a.kind}, {"images", corpus.image_ids}, {"subjects", a.subjects},
                                   {"provenance", prov}};
  std::ofstream(fs::path(a.out) / "manifest.json") << manifest.dump(2) << "\n";
  out << "wrote fixation lists for " << corpus.fixations.size() << " images x " << a.subjects << " subjects\n";
  return kExitOk;
}

int synth_task(const SynthArgs& a, const Common& c, std::mt19937_64& rng, const nlohmann::json& prov,
               std::ostream& out) {
  const Resolved r = resolve(c, a.flags);
  const double step_mag = r.step_mag_deg.value_or(4.0);
  const EnvConfig env = make_env_config(r.hyper, step_mag);
  TrainingSet set;
  std::vector<SpherePoint> centers;
  if (a.kind == "blob") {
    auto task = synth::blob_task(a.images, a.experts, env, a.width, a.height, rng);
    set = std::move(task.set);
    centers = std::move(task.centers);
  } else {
    set = synth::east_stay_task(a.images, a.experts, env, a.width, a.height, rng);
  }
  const fs::path dir(a.out);
  ensure_dir(dir / "images");
  ensure_dir(dir / "demos");
  nlohmann::json images = nlohmann::json::array();
  for (std::size_t i = 0; i < set.images.size(); ++i) {
    const std::string file = "images/" + set.image_ids[i] + ".png";
    write_png(dir / file, set.images[i], {{"provenance", prov}});
    nlohmann::json im = {{"id", set.image_ids[i]}, {"file", file}};
    if (!centers.empty()) im["blob_center"] = {centers[i].lat, centers[i].lon};
    images.push_back(im);
  }
  nlohmann::json demos = nlohmann::json::array();
  for (int n = 0; n < a.experts; ++n) {
    for (const auto& d : set.demos[n]) {
      const std::string file = "demos/" + set.image_ids[d.image] + "__stream" + std::to_string(n) + ".csv";
      const Rollout ro[] = {d.rollout};
      write_rollouts_csv(dir / file, ro, prov);
      demos.push_back({{"stream", n}, {"image", set.image_ids[d.image]}, {"rollout", file}});
    }
  }
  nlohmann::json experts = nlohmann::json::array();
  for (int n = 0; n < a.experts; ++n) {
    experts.push_back(a.kind == "blob" ? "blob" : (n % 2 == 0 ? "east" : "stay"));
  }
  const nlohmann::json manifest = {{"kind", a.kind},       {"streams", a.experts}, {"step_mag_deg", step_mag},
                                   {"steps", env.steps},   {"experts", experts},   {"images", images},
                                   {"demos", demos},       {"provenance", prov}};
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << "\n";
  out << "wrote " << set.images.size() << " images and " << demos.size() << " demos for " << a.experts
      << " streams\n";
  return kExitOk;
}

int cmd_synth(const SynthArgs& a, const Common& c, std::ostream& out, std::ostream&) {
  if (a.images < 1 || a.experts < 1 || a.subjects < 2 || a.width < 1 || a.height < 1) {
    throw ConfigError("synth sizes must be positive (subjects >= 2)");
  }
  ensure_dir(a.out);
  auto rng = derive_rng(c.seed.value_or(1), {});
  const auto prov = make_provenance({{"command", "synth"},
                                     {"kind", a.kind},
                                     {"seed", c.seed.value_or(1)},
                                     {"experts", a.experts},
                                     {"images", a.images},
                                     {"subjects", a.subjects},
                                     {"width", a.width},
                                     {"height", a.height},
                                     {"flags", a.flags}});
  if (a.kind == "trajectories") return synth_trajectories(a, rng, prov, out);
  if (a.kind == "attractor" || a.kind == "fcb") return synth_fixations(a, rng, prov, out);
  if (a.kind == "east-stay" || a.kind == "blob") return synth_task(a, c, rng, prov, out);
  throw ConfigError("unknown synth kind '" + a.kind + "'");
}

// ---------------------------------------------------------------- dispatch

template <typename T>
void flag(CLI::App* app, nlohmann::json& flags, const std::string& name, const std::string& key,
          const std::string& help) {
  app->add_option_function<T>(name, [&flags, key](const T& v) { flags[key] = v; }, help);
}

void add_hyper_flags(CLI::App* app, nlohmann::json& flags) {
  flag<int>(app, flags, "--cycles", "cycles", "Maximum training cycles");
  flag<int>(app, flags, "--episodes", "episodes", "Episodes per cycle");
  flag<int>(app, flags, "--episode-steps", "episode_steps", "Steps per episode");
  flag<int>(app, flags, "--streams", "streams", "Number of policy streams");
  flag<int>(app, flags, "--obs-size", "obs_size", "Observation width/height in pixels");
  flag<double>(app, flags, "--fov", "fov_deg", "Viewport field of view in degrees");
  flag<double>(app, flags, "--gamma", "gamma", "Discount factor");
  flag<double>(app, flags, "--lambda1", "lambda1", "Selector reward weight");
  flag<double>(app, flags, "--lambda2", "lambda2", "Entropy offset in the policy-gradient weight");
  flag<double>(app, flags, "--step-mag", "step_mag_deg", "HM step magnitude in degrees");
  flag<std::string>(app, flags, "--reward", "reward_mode", "Reward: gail, hand or random");
  app->add_flag_function("--advantage", [&flags](std::int64_t) { flags["advantage"] = true; },
                         "Subtract the value estimate from the policy-gradient weight");
  app->add_flag_function("--no-early-stop", [&flags](std::int64_t) { flags["early_stop"] = false; },
                         "Run every cycle even when rewards converge");
}

int exit_code(const std::exception& e) {
  if (dynamic_cast<const InputError*>(&e) || dynamic_cast<const fs::filesystem_error*>(&e)) return kExitInput;
  if (dynamic_cast<const NumericalError*>(&e)) return kExitNumerical;
  if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
  return kExitFailure;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Head-movement saliency for omnidirectional images via adversarial imitation", "salgail"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  std::uint64_t seed = 0;
  app.add_option("--preset", common.preset, "Hyperparameter preset: desk (default) or paper")
      ->check(CLI::IsMember({"desk", "paper"}));
  auto* seed_opt = app.add_option("--seed", seed, "Random seed (required by train and simulate)");
  app.add_option("--jobs", common.jobs, "Worker threads; 1 is the reproducible mode")->check(CLI::PositiveNumber);
  app.add_option("--config", common.config, "JSON file overriding the preset; flags override it")
      ->check(CLI::ExistingFile);

  IvtArgs ivt;
  auto* ivt_cmd = app.add_subcommand("ivt", "Label raw head-movement logs as fixations or saccades");
  ivt_cmd->add_option("--in", ivt.in, "Directory of <image>__s<subject>.csv logs")->required();
  ivt_cmd->add_option("--out", ivt.out, "Output directory for labelled logs")->required();
  ivt_cmd->add_option("--threshold", ivt.threshold, "Velocity threshold in deg/s")->capture_default_str();

  SalmapArgs sal;
  auto* sal_cmd = app.add_subcommand("salmap", "Render saliency maps from fixation files");
  sal_cmd->add_option("--fixations", sal.fixations, "Fixation CSV file or directory")->required();
  sal_cmd->add_option("--out", sal.out, "Output directory")->required();
  sal_cmd->add_option("--width", sal.width, "Map width")->capture_default_str();
  sal_cmd->add_option("--height", sal.height, "Map height")->capture_default_str();
  sal_cmd->add_flag("--no-fcb", sal.no_fcb, "Skip the front-centre-bias fusion");
  sal_cmd->add_option("--fcb-weight", sal.fcb_weight, "Front-centre-bias amplitude")->capture_default_str();
  sal_cmd->add_option_function<double>("--fcb-sigma-lon", [&](const double& v) { sal.sigma_lon = v; },
                                       "Bias width in longitude (deg); fitted when absent");
  sal_cmd->add_option_function<double>("--fcb-sigma-lat", [&](const double& v) { sal.sigma_lat = v; },
                                       "Bias width in latitude (deg); fitted when absent");

  EvalArgs ev;
  auto* ev_cmd = app.add_subcommand("eval", "Score predicted maps with CC, KL, NSS and AUC");
  ev_cmd->add_option("--pred", ev.pred, "Directory of predicted <image>.f32 maps")->required();
  ev_cmd->add_option("--gt", ev.gt, "Directory of ground-truth <image>.f32 maps")->required();
  ev_cmd->add_option("--fixations", ev.fixations, "Directory of ground-truth fixation files")->required();
  ev_cmd->add_option("--out", ev.out, "Metrics CSV path")->capture_default_str();

  TrainArgs tr;
  auto* tr_cmd = app.add_subcommand("train", "Train the multi-stream imitation model");
  tr_cmd->add_option("--manifest", tr.manifest, "Training manifest JSON")->required()->check(CLI::ExistingFile);
  tr_cmd->add_option("--out", tr.out, "Output directory for model.sgail and training_log.csv")->required();
  add_hyper_flags(tr_cmd, tr.flags);

  SimulateArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "Predict saliency maps with a trained model");
  sim_cmd->add_option("--model", sim.model, "Checkpoint written by train")->required()->check(CLI::ExistingFile);
  sim_cmd->add_option("--images", sim.images, "Image file or directory (.png or .f32)")->required();
  sim_cmd->add_option("--out", sim.out, "Output directory")->required();
  sim_cmd->add_option("--width", sim.width, "Map width (default: image width)");
  sim_cmd->add_option("--height", sim.height, "Map height (default: image height)");
  sim_cmd->add_flag("--no-fcb", sim.no_fcb, "Skip the front-centre-bias fusion");
  sim_cmd->add_option("--fcb-weight", sim.fcb_weight, "Front-centre-bias amplitude")->capture_default_str();
  sim_cmd->add_option("--fixation-mode", sim.fixation_mode, "Positions kept as fixations: all or stay")->capture_default_str();
  sim_cmd->add_flag("--argmax", sim.argmax, "Take the most likely action instead of sampling");

  FindingsArgs fi;
  auto* fi_cmd = app.add_subcommand("findings", "Consistency, bias and step-magnitude analysis of a corpus");
  fi_cmd->add_option("--in", fi.input, "Directory of trajectory or fixation CSVs")->required();
  fi_cmd->add_option("--out", fi.out, "Output directory")->required();
  fi_cmd->add_option("--reps", fi.reps, "Random splits per group size")->capture_default_str()->check(CLI::PositiveNumber);
  fi_cmd->add_option("--width", fi.width, "Map width for the consistency curve")->capture_default_str();
  fi_cmd->add_option("--height", fi.height, "Map height for the consistency curve")->capture_default_str();

  SynthArgs sy;
  auto* sy_cmd = app.add_subcommand("synth", "Generate synthetic corpora and imitation tasks");
  sy_cmd->add_option("--kind", sy.kind, "trajectories, attractor, fcb, east-stay or blob")->capture_default_str()
      ->check(CLI::IsMember({"trajectories", "attractor", "fcb", "east-stay", "blob"}));
  sy_cmd->add_option("--out", sy.out, "Output directory")->required();
  sy_cmd->add_option("--experts", sy.experts, "Streams with scripted experts")->capture_default_str();
  sy_cmd->add_option("--images", sy.images, "Number of images")->capture_default_str();
  sy_cmd->add_option("--subjects", sy.subjects, "Subjects per image (corpora)")->capture_default_str();
  sy_cmd->add_option("--width", sy.width, "Image width")->capture_default_str();
  sy_cmd->add_option("--height", sy.height, "Image height")->capture_default_str();
  add_hyper_flags(sy_cmd, sy.flags);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, eo;
    const int code = app.exit(e, o, eo);
    out << o.str();
    err << eo.str();
    return code == 0 ? kExitOk : kExitConfig;
  }
  if (seed_opt->count()) common.seed = seed;

  try {
    if (ivt_cmd->parsed()) return cmd_ivt(ivt, common, out, err);
    if (sal_cmd->parsed()) return cmd_salmap(sal, common, out, err);
    if (ev_cmd->parsed()) return cmd_eval(ev, common, out, err);
    if (tr_cmd->parsed()) return cmd_train(tr, common, out, err);
    if (sim_cmd->parsed()) return cmd_simulate(sim, common, out, err);
    if (fi_cmd->parsed()) return cmd_findings(fi, common, out, err);
    if (sy_cmd->parsed()) return cmd_synth(sy, common, out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code(e);
  }
  return kExitFailure;
}

}  // namespace salgail::cli

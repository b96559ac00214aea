#include "segsr/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <set>
#include <thread>

#include "json.hpp"
#include "segsr/baselines.hpp"

namespace fs = std::filesystem;

namespace segsr {

const std::vector<std::string> kKnownMethods = {"NN", "SBI", "LO", "LO-multi-view"};
const std::vector<MotionRegime> kStandardRegimes = {
    MotionRegime::NoMotion, MotionRegime::NormalMotion, MotionRegime::SevereMotion};

namespace {

using nlohmann::json;

void expect_keys(const json& j, const std::string& ctx,
                 std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ValidationError("config: " + ctx + " must be an object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : keys)
      if (item.key() == k) {
        known = true;
        break;
      }
    if (!known)
      throw ValidationError("config: unknown key '" + item.key() + "' in " + ctx);
  }
  for (const char* k : keys)
    if (!j.contains(k))
      throw ValidationError("config: missing key '" + std::string(k) + "' in " + ctx);
}

std::array<double, 2> pair2(const json& j, const std::string& ctx) {
  if (!j.is_array() || j.size() != 2)
    throw ValidationError("config: " + ctx + " must be a [lo, hi] pair");
  return {j[0].get<double>(), j[1].get<double>()};
}

void run_parallel(int n, int workers, const std::function<void(int)>& fn) {
  const int used = std::max(1, std::min(workers, n));
  if (used == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> ts;
  std::vector<std::exception_ptr> errs(size_t(used));
  for (int w = 0; w < used; ++w)
    ts.emplace_back([&, w]() {
      try {
        for (int i = w; i < n; i += used) fn(i);
      } catch (...) {
        errs[size_t(w)] = std::current_exception();
      }
    });
  for (auto& t : ts) t.join();
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
}

std::string fmt6(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", x);
  return buf;
}

}  // namespace

void ExperimentConfig::validate() const {
  phantom.validate();
  scale.validate();
  if (workers < 1) throw ValidationError("config: workers must be >= 1");
  if (dataset_n < 3) throw ValidationError("config: dataset n must be >= 3");
  if (split_counts[0] < 1 || split_counts[1] < 1 || split_counts[2] < 1)
    throw ValidationError("config: each split needs at least one volume");
  if (split_counts[0] + split_counts[1] + split_counts[2] != dataset_n)
    throw ValidationError("config: split counts must sum to dataset n");
  if (!(label_flip_rate >= 0.0 && label_flip_rate < 1.0))
    throw ValidationError("config: label_flip_rate must be in [0,1)");
  if (degrade_splits.empty())
    throw ValidationError("config: degradation splits must be non-empty");
  for (const auto& s : degrade_splits)
    if (s != "train" && s != "val" && s != "test")
      throw ValidationError("config: unknown degradation split '" + s + "'");
  arch.validate();
  if (arch.input_dims != phantom.dims)
    throw ValidationError("config: generator input dims must equal the phantom grid");
  if (!(beta > 0.0)) throw ValidationError("config: beta must be > 0");
  latent_opt.validate();
  if (methods.empty()) throw ValidationError("config: method list must be non-empty");
  for (const auto& m : methods)
    if (std::find(kKnownMethods.begin(), kKnownMethods.end(), m) == kKnownMethods.end())
      throw ValidationError("config: unknown method '" + m + "'");
  const int plane_limit =
      la_plane.mode == PlaneMode::FixedH ? phantom.dims[1] : phantom.dims[2];
  if (la_plane.index < 0 || la_plane.index >= plane_limit)
    throw ValidationError("config: la_plane index out of bounds");
  ScaleFactor::lr_extent(phantom.dims[0], scale.sd, "depth");
  ScaleFactor::lr_extent(phantom.dims[1], scale.sh, "height");
  ScaleFactor::lr_extent(phantom.dims[2], scale.sw, "width");
}

ExperimentConfig default_config() {
  ExperimentConfig cfg;
  cfg.arch.input_dims = cfg.phantom.dims;
  cfg.arch.num_classes = 4;
  cfg.train.epochs = 200;
  cfg.train.batch = 16;
  cfg.train.lr = 1e-4;
  cfg.train.patience = 20;
  // Adam at the paper's 1e-4 step cannot move the 64-dim code off the origin
  // within any practical iteration budget on this model scale; 1e-2 converges
  // in a few hundred iterations with the same stopping rule.
  cfg.latent_opt.lr = 1e-2;
  cfg.latent_opt.gamma = 1.0;
  cfg.la_plane = {PlaneMode::FixedH, cfg.phantom.dims[1] / 2};
  return cfg;
}

namespace {

json config_to_json(const ExperimentConfig& c) {
  return json{
      {"version", 1},
      {"seed", c.seed},
      {"out_dir", c.out_dir},
      {"workers", c.workers},
      {"phantom",
       {{"dims", {c.phantom.dims[0], c.phantom.dims[1], c.phantom.dims[2]}},
        {"spacing_mm",
         {c.phantom.spacing_mm[0], c.phantom.spacing_mm[1], c.phantom.spacing_mm[2]}},
        {"lv_long_semiaxis_mm", c.phantom.lv_long_semiaxis_mm},
        {"lv_short_semiaxis_mm", c.phantom.lv_short_semiaxis_mm},
        {"myo_thickness_mm", c.phantom.myo_thickness_mm},
        {"rv_thickness_mm", c.phantom.rv_thickness_mm},
        {"rv_angular_extent_deg", c.phantom.rv_angular_extent_deg},
        {"max_translation_mm", c.phantom.max_translation_mm},
        {"max_rotation_deg", c.phantom.max_rotation_deg},
        {"basal_offset_scale", c.phantom.basal_offset_scale}}},
      {"dataset",
       {{"n", c.dataset_n},
        {"split", {c.split_counts[0], c.split_counts[1], c.split_counts[2]}}}},
      {"degradation",
       {{"scale", {c.scale.sd, c.scale.sh, c.scale.sw}},
        {"label_flip_rate", c.label_flip_rate},
        {"splits", c.degrade_splits},
        {"custom_motion_mean_mm", c.custom_motion_mean_mm},
        {"custom_motion_std_mm", c.custom_motion_std_mm}}},
      {"generator",
       {{"channels", c.arch.channels},
        {"latent_dim", c.arch.latent_dim},
        {"kernel", c.arch.kernel},
        {"stride", c.arch.stride},
        {"pad", c.arch.pad},
        {"lrelu_slope", c.arch.lrelu_slope},
        {"beta", c.beta},
        {"training",
         {{"epochs", c.train.epochs},
          {"batch", c.train.batch},
          {"lr", c.train.lr},
          {"patience", c.train.patience}}}}},
      {"latent_opt",
       {{"lr", c.latent_opt.lr},
        {"gamma", c.latent_opt.gamma},
        {"rel_change_tol", c.latent_opt.rel_change_tol},
        {"rel_change_window", c.latent_opt.rel_change_window},
        {"max_iters", c.latent_opt.max_iters},
        {"prob_clip", c.latent_opt.prob_clip}}},
      {"la_plane",
       {{"mode", c.la_plane.mode == PlaneMode::FixedH ? "fixed-h" : "fixed-w"},
        {"index", c.la_plane.index}}},
      {"methods", c.methods},
  };
}

}  // namespace

void save_config(const ExperimentConfig& cfg, const std::string& path) {
  std::string text = config_to_json(cfg).dump(2);
  text.push_back('\n');
  write_file_bytes(path, text.data(), text.size());
}

ExperimentConfig load_config(const std::string& path) {
  auto bytes = read_file_bytes(path);
  json j;
  try {
    j = json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw FormatError("config: malformed JSON in " + path + ": " + e.what());
  }
  expect_keys(j, "config",
              {"version", "seed", "out_dir", "workers", "phantom", "dataset",
               "degradation", "generator", "latent_opt", "la_plane", "methods"});
  if (j["version"] != 1) throw VersionError("config: unsupported version in " + path);

  ExperimentConfig c = default_config();
  c.seed = j["seed"].get<uint64_t>();
  c.out_dir = j["out_dir"].get<std::string>();
  c.workers = j["workers"].get<int>();

  const json& ph = j["phantom"];
  expect_keys(ph, "phantom",
              {"dims", "spacing_mm", "lv_long_semiaxis_mm", "lv_short_semiaxis_mm",
               "myo_thickness_mm", "rv_thickness_mm", "rv_angular_extent_deg",
               "max_translation_mm", "max_rotation_deg", "basal_offset_scale"});
  auto dims = ph["dims"];
  auto spac = ph["spacing_mm"];
  if (!dims.is_array() || dims.size() != 3 || !spac.is_array() || spac.size() != 3)
    throw ValidationError("config: phantom dims/spacing must be length-3 arrays");
  c.phantom.dims = {dims[0].get<int>(), dims[1].get<int>(), dims[2].get<int>()};
  c.phantom.spacing_mm = {spac[0].get<double>(), spac[1].get<double>(),
                          spac[2].get<double>()};
  c.phantom.lv_long_semiaxis_mm = pair2(ph["lv_long_semiaxis_mm"], "lv_long_semiaxis_mm");
  c.phantom.lv_short_semiaxis_mm =
      pair2(ph["lv_short_semiaxis_mm"], "lv_short_semiaxis_mm");
  c.phantom.myo_thickness_mm = pair2(ph["myo_thickness_mm"], "myo_thickness_mm");
  c.phantom.rv_thickness_mm = pair2(ph["rv_thickness_mm"], "rv_thickness_mm");
  c.phantom.rv_angular_extent_deg =
      pair2(ph["rv_angular_extent_deg"], "rv_angular_extent_deg");
  c.phantom.max_translation_mm = ph["max_translation_mm"].get<double>();
  c.phantom.max_rotation_deg = ph["max_rotation_deg"].get<double>();
  c.phantom.basal_offset_scale = ph["basal_offset_scale"].get<double>();

  const json& ds = j["dataset"];
  expect_keys(ds, "dataset", {"n", "split"});
  c.dataset_n = ds["n"].get<int>();
  auto split = ds["split"];
  if (!split.is_array() || split.size() != 3)
    throw ValidationError("config: dataset split must be [train, val, test] counts");
  c.split_counts = {split[0].get<int>(), split[1].get<int>(), split[2].get<int>()};

  const json& dg = j["degradation"];
  expect_keys(dg, "degradation",
              {"scale", "label_flip_rate", "splits", "custom_motion_mean_mm",
               "custom_motion_std_mm"});
  auto sc = dg["scale"];
  if (!sc.is_array() || sc.size() != 3)
    throw ValidationError("config: degradation scale must be length-3");
  c.scale = {sc[0].get<double>(), sc[1].get<double>(), sc[2].get<double>()};
  c.label_flip_rate = dg["label_flip_rate"].get<double>();
  c.degrade_splits = dg["splits"].get<std::vector<std::string>>();
  c.custom_motion_mean_mm = dg["custom_motion_mean_mm"].get<double>();
  c.custom_motion_std_mm = dg["custom_motion_std_mm"].get<double>();

  const json& g = j["generator"];
  expect_keys(g, "generator",
              {"channels", "latent_dim", "kernel", "stride", "pad", "lrelu_slope",
               "beta", "training"});
  c.arch.channels = g["channels"].get<std::vector<int>>();
  c.arch.latent_dim = g["latent_dim"].get<int>();
  c.arch.kernel = g["kernel"].get<int>();
  c.arch.stride = g["stride"].get<int>();
  c.arch.pad = g["pad"].get<int>();
  c.arch.lrelu_slope = g["lrelu_slope"].get<double>();
  c.arch.input_dims = c.phantom.dims;
  c.arch.num_classes = 4;
  c.beta = g["beta"].get<double>();
  const json& tr = g["training"];
  expect_keys(tr, "generator.training", {"epochs", "batch", "lr", "patience"});
  c.train.epochs = tr["epochs"].get<int>();
  c.train.batch = tr["batch"].get<int>();
  c.train.lr = tr["lr"].get<double>();
  c.train.patience = tr["patience"].get<int>();

  const json& lo = j["latent_opt"];
  expect_keys(lo, "latent_opt",
              {"lr", "gamma", "rel_change_tol", "rel_change_window", "max_iters",
               "prob_clip"});
  c.latent_opt.lr = lo["lr"].get<double>();
  c.latent_opt.gamma = lo["gamma"].get<double>();
  c.latent_opt.rel_change_tol = lo["rel_change_tol"].get<double>();
  c.latent_opt.rel_change_window = lo["rel_change_window"].get<int>();
  c.latent_opt.max_iters = lo["max_iters"].get<int>();
  c.latent_opt.prob_clip = lo["prob_clip"].get<double>();

  const json& lp = j["la_plane"];
  expect_keys(lp, "la_plane", {"mode", "index"});
  std::string mode = lp["mode"].get<std::string>();
  if (mode == "fixed-h") c.la_plane.mode = PlaneMode::FixedH;
  else if (mode == "fixed-w") c.la_plane.mode = PlaneMode::FixedW;
  else throw ValidationError("config: la_plane mode must be fixed-h or fixed-w");
  c.la_plane.index = lp["index"].get<int>();

  c.methods = j["methods"].get<std::vector<std::string>>();

  if (const char* env = std::getenv("SEGSR_OUT")) c.out_dir = env;
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------

std::string subject_name(int global_index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "vol_%03d", global_index);
  return buf;
}

namespace {

std::string join(const std::string& a, const std::string& b) {
  return (fs::path(a) / b).string();
}

uint64_t stage_seed(const ExperimentConfig& cfg, const std::string& tag) {
  return derive_seed(cfg.seed, tag);
}

struct Subject {
  int global_index = 0;
  std::string name;      // vol_###
  std::string hr_path;   // absolute-ish base path of the HR volume
};

std::vector<Subject> subjects_of(const ExperimentConfig& cfg,
                                 const DatasetManifest& m,
                                 const std::vector<std::string>& splits) {
  std::vector<Subject> out;
  auto add = [&](const std::vector<std::string>& paths, int base) {
    for (size_t i = 0; i < paths.size(); ++i)
      out.push_back({base + int(i), subject_name(base + int(i)),
                     join(cfg.out_dir, paths[i])});
  };
  for (const auto& s : splits) {
    if (s == "train") add(m.train, 0);
    else if (s == "val") add(m.val, m.split_counts[0]);
    else add(m.test, m.split_counts[0] + m.split_counts[1]);
  }
  return out;
}

}  // namespace

DatasetManifest load_manifest(const ExperimentConfig& cfg) {
  const std::string path = join(cfg.out_dir, "data/manifest.json");
  auto bytes = read_file_bytes(path);
  json j;
  try {
    j = json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw FormatError("manifest: malformed JSON: " + std::string(e.what()));
  }
  if (j.value("version", -1) != 1) throw VersionError("manifest: unsupported version");
  DatasetManifest m;
  m.n = j.at("n").get<int>();
  auto sc = j.at("split_counts");
  m.split_counts = {sc.at(0).get<int>(), sc.at(1).get<int>(), sc.at(2).get<int>()};
  m.train = j.at("splits").at("train").get<std::vector<std::string>>();
  m.val = j.at("splits").at("val").get<std::vector<std::string>>();
  m.test = j.at("splits").at("test").get<std::vector<std::string>>();
  if (int(m.train.size()) != m.split_counts[0] || int(m.val.size()) != m.split_counts[1] ||
      int(m.test.size()) != m.split_counts[2])
    throw FormatError("manifest: split sizes do not match split_counts");
  return m;
}

std::string cmd_gen_data(const ExperimentConfig& cfg) {
  cfg.validate();
  PhantomParams pp = cfg.phantom;
  pp.rng_seed = stage_seed(cfg, "gen-data");
  const std::array<double, 3> ratios = {double(cfg.split_counts[0]) / cfg.dataset_n,
                                        double(cfg.split_counts[1]) / cfg.dataset_n,
                                        double(cfg.split_counts[2]) / cfg.dataset_n};
  DatasetSplits splits = generate_dataset(pp, cfg.dataset_n, ratios);

  fs::create_directories(join(cfg.out_dir, "data/hr"));
  json jsplits = {{"train", json::array()}, {"val", json::array()}, {"test", json::array()}};
  int idx = 0;
  auto dump_split = [&](const std::vector<LabelVolume>& vols, const char* key) {
    for (const auto& v : vols) {
      std::string rel = "data/hr/" + subject_name(idx);
      save_volume(v, join(cfg.out_dir, rel));
      jsplits[key].push_back(rel);
      ++idx;
    }
  };
  dump_split(splits.train, "train");
  dump_split(splits.val, "val");
  dump_split(splits.test, "test");

  json manifest = {
      {"version", 1},
      {"n", cfg.dataset_n},
      {"split_counts", {cfg.split_counts[0], cfg.split_counts[1], cfg.split_counts[2]}},
      {"phantom_seed", pp.rng_seed},
      {"phantom", config_to_json(cfg)["phantom"]},
      {"splits", jsplits},
  };
  const std::string mpath = join(cfg.out_dir, "data/manifest.json");
  std::string text = manifest.dump(2);
  text.push_back('\n');
  write_file_bytes(mpath, text.data(), text.size());
  return mpath;
}

std::string cmd_train_vae(const ExperimentConfig& cfg, double* recon_dice) {
  cfg.validate();
  DatasetManifest m = load_manifest(cfg);
  std::vector<LabelVolume> train_set, val_set;
  for (const auto& p : m.train) train_set.push_back(load_volume(join(cfg.out_dir, p)));
  for (const auto& p : m.val) val_set.push_back(load_volume(join(cfg.out_dir, p)));

  VaeTrainConfig tc = cfg.train;
  tc.seed = stage_seed(cfg, "train-vae");
  tc.workers = cfg.workers;
  TrainResult res = train_vae(train_set, val_set, cfg.arch, cfg.beta, tc);

  fs::create_directories(join(cfg.out_dir, "models"));
  const std::string ckpt = join(cfg.out_dir, "models/vae.ckpt");
  save_model(res.model, ckpt);

  std::string log = "epoch,ce,kl,total,val_ce\n";
  char buf[160];
  for (size_t e = 0; e < res.history.size(); ++e) {
    const auto& st = res.history[e];
    std::snprintf(buf, sizeof(buf), "%zu,%.9g,%.9g,%.9g,%.9g\n", e, st.train.ce,
                  st.train.kl, st.train.total, st.val_ce);
    log += buf;
  }
  const std::string log_path = join(cfg.out_dir, "models/training_log.csv");
  write_file_bytes(log_path, log.data(), log.size());

  double dice_sum = 0.0;
  for (const auto& v : val_set) {
    auto [mu, logvar] = encode(res.model, one_hot(v));
    LabelVolume rec = argmax_labels(decode(res.model, mu), v);
    dice_sum += mean_foreground_dice(rec, v);
  }
  const double rd = val_set.empty() ? 0.0 : dice_sum / double(val_set.size());
  if (recon_dice) *recon_dice = rd;
  std::printf("train-vae: epochs=%d best_val_ce=%.6f recon_dice=%.4f\n",
              res.model.meta.epochs_run, res.model.meta.best_val_ce, rd);
  return ckpt;
}

void cmd_degrade(const ExperimentConfig& cfg, MotionRegime regime) {
  cfg.validate();
  DatasetManifest m = load_manifest(cfg);
  auto subs = subjects_of(cfg, m, cfg.degrade_splits);
  const std::string rdir = join(cfg.out_dir, std::string("degraded/") + regime_name(regime));
  fs::create_directories(join(rdir, "motion"));

  const uint64_t base = stage_seed(cfg, std::string("degrade:") + regime_name(regime));
  run_parallel(int(subs.size()), cfg.workers, [&](int i) {
    const Subject& s = subs[size_t(i)];
    LabelVolume hr = load_volume(s.hr_path);
    DegradationSpec spec = DegradationSpec::preset(
        regime, cfg.scale, derive_seed(base, uint64_t(s.global_index)),
        cfg.label_flip_rate);
    if (regime == MotionRegime::Custom) {
      spec.motion_mean_mm = cfg.custom_motion_mean_mm;
      spec.motion_std_mm = cfg.custom_motion_std_mm;
    }
    auto [lr, d_true] = degrade(hr, spec);
    save_volume(lr, join(rdir, s.name));
    save_motion(d_true, join(rdir, "motion/" + s.name + ".json"));
  });

  json subjects = json::array();
  for (const auto& s : subs) subjects.push_back(s.name);
  json manifest = {
      {"version", 1},
      {"regime", regime_name(regime)},
      {"scale", {cfg.scale.sd, cfg.scale.sh, cfg.scale.sw}},
      {"label_flip_rate", cfg.label_flip_rate},
      {"subjects", subjects},
  };
  std::string text = manifest.dump(2);
  text.push_back('\n');
  const std::string mpath = join(rdir, "manifest.json");
  write_file_bytes(mpath, text.data(), text.size());
  std::printf("degrade: regime=%s subjects=%zu\n", regime_name(regime), subs.size());
}

namespace {

std::vector<std::string> degraded_subjects(const ExperimentConfig& cfg,
                                           MotionRegime regime) {
  const std::string mpath = join(cfg.out_dir, std::string("degraded/") +
                                                  regime_name(regime) + "/manifest.json");
  if (!fs::exists(mpath))
    throw DataError("superres: no degraded data for regime '" +
                    std::string(regime_name(regime)) + "' (run degrade first)");
  auto bytes = read_file_bytes(mpath);
  json j = json::parse(bytes.begin(), bytes.end());
  return j.at("subjects").get<std::vector<std::string>>();
}

int subject_index(const std::string& name) {
  return std::atoi(name.substr(4).c_str());
}

}  // namespace

void cmd_superres(const ExperimentConfig& cfg, const std::string& method,
                  MotionRegime regime) {
  cfg.validate();
  if (std::find(kKnownMethods.begin(), kKnownMethods.end(), method) ==
      kKnownMethods.end())
    throw UsageError("superres: unknown method '" + method + "'");

  auto names = degraded_subjects(cfg, regime);
  const std::string rdir = join(cfg.out_dir, std::string("degraded/") + regime_name(regime));
  const std::string odir =
      join(cfg.out_dir, std::string("sr/") + regime_name(regime) + "/" + method);
  fs::create_directories(odir);

  if (method == "NN" || method == "SBI") {
    run_parallel(int(names.size()), cfg.workers, [&](int i) {
      LabelVolume lr = load_volume(join(rdir, names[size_t(i)]));
      LabelVolume sr = method == "NN" ? nn_upsample(lr, cfg.scale)
                                      : sbi_upsample(lr, cfg.scale);
      save_volume(sr, join(odir, names[size_t(i)]));
    });
  } else {
    const std::string ckpt = join(cfg.out_dir, "models/vae.ckpt");
    if (!fs::exists(ckpt))
      throw DataError("superres: missing checkpoint " + ckpt + " (run train-vae first)");
    const GeneratorModel model = load_model(ckpt);
    const bool multiview = method == "LO-multi-view";
    run_parallel(int(names.size()), cfg.workers, [&](int i) {
      const std::string& name = names[size_t(i)];
      LabelVolume lr = load_volume(join(rdir, name));
      std::optional<LaTarget> la;
      if (multiview) {
        LabelVolume hr_gt = load_volume(
            join(cfg.out_dir, "data/hr/" + subject_name(subject_index(name))));
        la = LaTarget{cfg.la_plane, slice_labels(hr_gt, cfg.la_plane)};
      }
      SuperResolveResult res = optimise(model, lr, la, cfg.latent_opt);
      save_volume(res.sr, join(odir, name));
      save_motion(res.d_hat, join(odir, name + "_dhat.json"));
      json zj = {{"z", res.z_hat}};
      std::string ztext = zj.dump();
      write_file_bytes(join(odir, name + "_z.json"), ztext.data(), ztext.size());
      save_trace_csv(res.trace, join(odir, name + "_trace.csv"));
    });
  }
  std::printf("superres: regime=%s method=%s subjects=%zu\n", regime_name(regime),
              method.c_str(), names.size());
}

// ---------------------------------------------------------------------------

const MetricsRow* MetricsTable::find(const std::string& regime,
                                     const std::string& method) const {
  for (const auto& r : rows)
    if (r.regime == regime && r.method == method) return &r;
  return nullptr;
}

namespace {

struct Stat {
  std::vector<double> xs;
  void add(double x) { xs.push_back(x); }
  double mean() const {
    double s = 0;
    for (double x : xs) s += x;
    return xs.empty() ? 0.0 : s / double(xs.size());
  }
  double stdev() const {
    if (xs.size() < 2) return 0.0;
    double m = mean(), s = 0;
    for (double x : xs) s += (x - m) * (x - m);
    return std::sqrt(s / double(xs.size() - 1));
  }
};

}  // namespace

EvaluateResult cmd_evaluate(const ExperimentConfig& cfg) {
  cfg.validate();
  DatasetManifest m = load_manifest(cfg);
  auto subs = subjects_of(cfg, m, {"test"});

  EvaluateResult out;
  for (MotionRegime regime : kStandardRegimes) {
    for (const auto& method : cfg.methods) {
      MetricsRow sa_row, la_row;
      sa_row.regime = la_row.regime = regime_name(regime);
      sa_row.method = la_row.method = method;

      const std::string odir =
          join(cfg.out_dir, std::string("sr/") + regime_name(regime) + "/" + method);
      bool have_all = true;
      for (const auto& s : subs)
        if (!fs::exists(join(odir, s.name + ".segvol"))) {
          have_all = false;
          break;
        }
      if (!have_all) {
        out.sa.rows.push_back(sa_row);
        out.la.rows.push_back(la_row);
        continue;
      }

      Stat lv, myo, rv, lalv, lamyo, larv, merr;
      const bool is_lo = method == "LO" || method == "LO-multi-view";
      for (const auto& s : subs) {
        LabelVolume gt = load_volume(s.hr_path);
        LabelVolume sr = load_volume(join(odir, s.name));
        lv.add(dice(sr, gt, 1));
        myo.add(dice(sr, gt, 2));
        rv.add(dice(sr, gt, 3));
        LabelImage gt_la = slice_labels(gt, cfg.la_plane);
        LabelImage sr_la = slice_labels(sr, cfg.la_plane);
        lalv.add(dice(sr_la, gt_la, 1));
        lamyo.add(dice(sr_la, gt_la, 2));
        larv.add(dice(sr_la, gt_la, 3));
        if (is_lo) {
          MotionParams dhat = load_motion(join(odir, s.name + "_dhat.json"));
          MotionParams dtrue = load_motion(
              join(cfg.out_dir, std::string("degraded/") + regime_name(regime) +
                                    "/motion/" + s.name + ".json"));
          if (dhat.size() != dtrue.size())
            throw DataError("evaluate: motion length mismatch for " + s.name);
          double e = 0.0;
          for (size_t k = 0; k < dhat.size(); ++k) {
            e += std::abs(dhat.shifts[k][0] - dtrue.shifts[k][0]) / cfg.scale.sh;
            e += std::abs(dhat.shifts[k][1] - dtrue.shifts[k][1]) / cfg.scale.sw;
          }
          merr.add(e / double(2 * dhat.size()));
        }
      }

      sa_row.present = la_row.present = true;
      sa_row.lv_mean = lv.mean();
      sa_row.lv_std = lv.stdev();
      sa_row.myo_mean = myo.mean();
      sa_row.myo_std = myo.stdev();
      sa_row.rv_mean = rv.mean();
      sa_row.rv_std = rv.stdev();
      sa_row.mean = (sa_row.lv_mean + sa_row.myo_mean + sa_row.rv_mean) / 3.0;
      if (is_lo) sa_row.motion_err = merr.mean();
      la_row.lv_mean = lalv.mean();
      la_row.lv_std = lalv.stdev();
      la_row.myo_mean = lamyo.mean();
      la_row.myo_std = lamyo.stdev();
      la_row.rv_mean = larv.mean();
      la_row.rv_std = larv.stdev();
      la_row.mean = (la_row.lv_mean + la_row.myo_mean + la_row.rv_mean) / 3.0;
      out.sa.rows.push_back(sa_row);
      out.la.rows.push_back(la_row);
    }
  }

  out.complete = true;
  for (const auto& r : out.sa.rows)
    if (!r.present) out.complete = false;

  fs::create_directories(join(cfg.out_dir, "metrics"));
  auto table_csv = [&](const MetricsTable& t, bool motion_col) {
    std::string csv =
        "regime,method,dice_lv_mean,dice_lv_std,dice_myo_mean,dice_myo_std,"
        "dice_rv_mean,dice_rv_std,dice_mean";
    if (motion_col) csv += ",motion_err_vox";
    csv += "\n";
    for (const auto& r : t.rows) {
      csv += r.regime + "," + r.method;
      if (r.present) {
        csv += "," + fmt6(r.lv_mean) + "," + fmt6(r.lv_std) + "," + fmt6(r.myo_mean) +
               "," + fmt6(r.myo_std) + "," + fmt6(r.rv_mean) + "," + fmt6(r.rv_std) +
               "," + fmt6(r.mean);
      } else {
        csv += ",,,,,,,";
      }
      if (motion_col) csv += r.motion_err ? "," + fmt6(*r.motion_err) : ",";
      csv += "\n";
    }
    return csv;
  };
  std::string sa_csv = table_csv(out.sa, true);
  std::string la_csv = table_csv(out.la, false);
  write_file_bytes(join(cfg.out_dir, "metrics/metrics.csv"), sa_csv.data(), sa_csv.size());
  write_file_bytes(join(cfg.out_dir, "metrics/la_metrics.csv"), la_csv.data(),
                   la_csv.size());

  auto table_json = [](const MetricsTable& t) {
    json rows = json::array();
    for (const auto& r : t.rows) {
      json row = {{"regime", r.regime}, {"method", r.method}, {"present", r.present}};
      if (r.present) {
        row["dice_lv_mean"] = r.lv_mean;
        row["dice_lv_std"] = r.lv_std;
        row["dice_myo_mean"] = r.myo_mean;
        row["dice_myo_std"] = r.myo_std;
        row["dice_rv_mean"] = r.rv_mean;
        row["dice_rv_std"] = r.rv_std;
        row["dice_mean"] = r.mean;
        if (r.motion_err) row["motion_err_vox"] = *r.motion_err;
      }
      rows.push_back(row);
    }
    return rows;
  };
  json full = {{"version", 1}, {"sa", table_json(out.sa)}, {"la", table_json(out.la)}};
  std::string jtext = full.dump(2);
  jtext.push_back('\n');
  write_file_bytes(join(cfg.out_dir, "metrics/metrics.json"), jtext.data(), jtext.size());

  std::printf("evaluate: %zu rows, %s\n", out.sa.rows.size(),
              out.complete ? "complete" : "INCOMPLETE");
  return out;
}

}  // namespace segsr

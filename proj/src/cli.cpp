#include "projsynth/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "projsynth/containers.hpp"
#include "projsynth/error.hpp"

namespace projsynth::cli {

namespace fs = std::filesystem;
using nlohmann::json;

// --- configuration ---------------------------------------------------------

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& section) {
  if (!j.is_object()) throw ConfigError("config section '" + section + "' must be a JSON object");
  for (const auto& [k, _] : j.items())
    if (!allowed.count(k)) throw ConfigError("unknown key '" + k + "' in config section '" + section + "'");
}

template <typename V>
void read(const json& j, const char* key, V& dst) {
  if (j.contains(key)) dst = j.at(key).get<V>();
}

template <typename V>
void read(const json& j, const char* key, std::optional<V>& dst) {
  if (j.contains(key)) dst = j.at(key).get<V>();
}

SsimConfig ssim_config_from_json(const json& j) {
  check_keys(j, {"k1", "k2", "dynamic_range", "window", "window_size", "sigma"}, "metrics");
  SsimConfig c;
  read(j, "k1", c.k1);
  read(j, "k2", c.k2);
  read(j, "dynamic_range", c.dynamic_range);
  read(j, "window_size", c.window_size);
  read(j, "sigma", c.sigma);
  if (j.contains("window")) {
    const auto w = j.at("window").get<std::string>();
    if (w != "gaussian" && w != "uniform") throw ConfigError("metrics.window must be 'gaussian' or 'uniform'");
    c.window = w == "gaussian" ? SsimConfig::Window::gaussian : SsimConfig::Window::uniform;
  }
  return c;
}

}  // namespace

void PipelineConfig::validate() const {
  if (phantom.size < 1) throw ConfigError("phantom size must be >= 1 (got " + std::to_string(phantom.size) + ")");
  if (!(phantom.fov_mm > 0)) throw ConfigError("phantom field of view must be > 0");
  if (phantom.supersample < 1) throw ConfigError("phantom supersample must be >= 1");
  if (phantom.spec) phantom.spec->validate();

  if (geometry.views < 1) throw ConfigError("views must be >= 1 (got " + std::to_string(geometry.views) + ")");
  if (!(geometry.angular_range_deg > 0)) throw ConfigError("angular range must be > 0");
  if (!(geometry.sid_mm > 0) || !(geometry.sdd_mm > geometry.sid_mm))
    throw ConfigError("geometry needs 0 < SID < SDD");
  if (geometry.detector_pixels < 1) throw ConfigError("detector pixels must be >= 1");
  if (!(geometry.detector_extent_mm > 0)) throw ConfigError("detector extent must be > 0");
  if (geometry.step_mm && !(*geometry.step_mm > 0)) throw ConfigError("integration step must be > 0");

  if (split.train && *split.train < 0) throw ConfigError("train count must be >= 0");
  if (split.test && *split.test < 0) throw ConfigError("test count must be >= 0");
  if (split.train && split.test && *split.train + *split.test > geometry.views)
    throw ConfigError("train + test (" + std::to_string(*split.train + *split.test) + ") exceeds views (" +
                      std::to_string(geometry.views) + ")");

  if (model) std::visit([](const auto& m) { m.validate(); }, *model);
  train.validate();
  loss.validate();
  if (evaluation_network.width_divisor < 1) throw ConfigError("evaluation network width divisor must be >= 1");
  try {
    metrics.validate();
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
}

PipelineConfig pipeline_config_from_json(const json& j) {
  check_keys(j, {"phantom", "geometry", "split", "model", "train", "loss", "evaluation_network", "metrics"}, "root");
  PipelineConfig c;
  try {
    if (j.contains("phantom")) {
      const auto& p = j.at("phantom");
      check_keys(p, {"size", "fov_mm", "seed", "supersample", "spec"}, "phantom");
      read(p, "size", c.phantom.size);
      read(p, "fov_mm", c.phantom.fov_mm);
      read(p, "seed", c.phantom.seed);
      read(p, "supersample", c.phantom.supersample);
      if (p.contains("spec")) c.phantom.spec = phantom_spec_from_json(p.at("spec"));
    }
    if (j.contains("geometry")) {
      const auto& g = j.at("geometry");
      check_keys(g, {"views", "angular_range_deg", "sid_mm", "sdd_mm", "detector_pixels", "detector_extent_mm", "step_mm"},
                 "geometry");
      read(g, "views", c.geometry.views);
      read(g, "angular_range_deg", c.geometry.angular_range_deg);
      read(g, "sid_mm", c.geometry.sid_mm);
      read(g, "sdd_mm", c.geometry.sdd_mm);
      read(g, "detector_pixels", c.geometry.detector_pixels);
      read(g, "detector_extent_mm", c.geometry.detector_extent_mm);
      read(g, "step_mm", c.geometry.step_mm);
    }
    if (j.contains("split")) {
      const auto& s = j.at("split");
      check_keys(s, {"train", "test", "seed"}, "split");
      read(s, "train", c.split.train);
      read(s, "test", c.split.test);
      read(s, "seed", c.split.seed);
    }
    if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
    if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
    if (j.contains("loss")) c.loss = loss_config_from_json(j.at("loss"));
    if (j.contains("evaluation_network")) {
      const auto& e = j.at("evaluation_network");
      check_keys(e, {"weights", "width_divisor"}, "evaluation_network");
      read(e, "weights", c.evaluation_network.weights);
      read(e, "width_divisor", c.evaluation_network.width_divisor);
    }
    if (j.contains("metrics")) c.metrics = ssim_config_from_json(j.at("metrics"));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  c.validate();
  return c;
}

PipelineConfig load_pipeline_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return pipeline_config_from_json(j);
}

CRNConfig fit_crn_to_resolution(std::size_t h, std::size_t w) {
  CRNConfig c;
  for (int n = 8; n >= 1; --n) {
    const std::size_t f = std::size_t(1) << (n - 1);
    if (h % f == 0 && w % f == 0 && h / f >= 4 && w / f >= 4) {
      c.n_modules = n;
      c.coarse_h = h / f;
      c.coarse_w = w / f;
      return c;
    }
  }
  c.n_modules = 1;
  c.coarse_h = h;
  c.coarse_w = w;
  return c;
}

// --- helpers ---------------------------------------------------------------

namespace {

void write_json(const fs::path& p, const json& j) {
  std::ofstream out(p);
  if (!out) throw LoadError("cannot open " + p.string() + " for writing");
  out << j.dump(2) << '\n';
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p);
  if (!out) throw LoadError("cannot open " + p.string() + " for writing");
  out << s;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw LoadError("cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw LoadError(p.string() + ": " + e.what());
  }
}

std::string view_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "view_%04zu", i);
  return buf;
}

struct Dataset {
  std::vector<DatasetPair> pairs;
  std::vector<std::size_t> train, test;
};

Dataset load_dataset(const fs::path& dir) {
  const json m = read_json(dir / "manifest.json");
  Dataset d;
  std::map<std::string, std::size_t> index;
  try {
    for (const auto& p : m.at("pairs")) {
      const auto id = p.at("id").get<std::string>();
      index[id] = d.pairs.size();
      d.pairs.push_back(make_dataset_pair(load_projection(dir / p.at("mr").get<std::string>()),
                                          load_projection(dir / p.at("xray").get<std::string>()), id));
    }
    auto ids = [&](const char* key) {
      std::vector<std::size_t> out;
      for (const auto& id : m.at("split").at(key)) {
        const auto it = index.find(id.get<std::string>());
        if (it == index.end()) throw LoadError("manifest split names unknown pair '" + id.get<std::string>() + "'");
        out.push_back(it->second);
      }
      return out;
    };
    d.train = ids("train");
    d.test = ids("test");
  } catch (const json::exception& e) {
    throw LoadError((dir / "manifest.json").string() + ": " + e.what());
  }
  return d;
}

std::vector<std::size_t> select_split(const Dataset& d, const std::string& split) {
  if (split == "test") return d.test;
  if (split == "train") return d.train;
  if (split == "all") {
    std::vector<std::size_t> all(d.pairs.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return all;
  }
  throw ConfigError("unknown split '" + split + "' (valid: test, train, all)");
}

PipelineConfig base_config(const std::string& path) {
  return path.empty() ? PipelineConfig{} : load_pipeline_config(path);
}

template <typename V>
void override_if(const CLI::Option* opt, V& dst, const V& value) {
  if (opt->count() > 0) dst = value;
}

std::unique_ptr<Generator<float>> load_checked(const fs::path& checkpoint, const Dataset& d,
                                               const std::vector<std::size_t>& which) {
  auto model = load_model(checkpoint);
  for (auto i : which) {
    try {
      model->check_input(d.pairs[i].mr.nv, d.pairs[i].mr.nu);
    } catch (const Error& e) {
      throw LoadError("checkpoint " + checkpoint.string() + " does not fit the dataset: " + e.what());
    }
  }
  return model;
}

void synthesize_split(const fs::path& checkpoint, const Dataset& d, const std::vector<std::size_t>& which,
                      const fs::path& out) {
  auto model = load_checked(checkpoint, d, which);
  fs::create_directories(out / "previews");
  for (auto i : which) {
    const auto& p = d.pairs[i];
    const ProjectionImage g = synthesize(*model, p.mr);
    save_projection(out / (p.view_id + "_synth.json"), g);
    export_pgm(out / "previews" / (p.view_id + "_synth.pgm"), g);
  }
}

// --- subcommands -----------------------------------------------------------

struct GenPhantomArgs {
  std::string config, out = "phantom";
  int size = 0, supersample = 1;
  double fov = 0;
  std::uint64_t seed = 0;
  CLI::Option *o_size, *o_fov, *o_seed, *o_super;
};

int cmd_gen_phantom(const GenPhantomArgs& a) {
  PipelineConfig cfg = base_config(a.config);
  override_if(a.o_size, cfg.phantom.size, a.size);
  override_if(a.o_fov, cfg.phantom.fov_mm, a.fov);
  override_if(a.o_seed, cfg.phantom.seed, a.seed);
  override_if(a.o_super, cfg.phantom.supersample, a.supersample);
  cfg.validate();

  const std::size_t n = std::size_t(cfg.phantom.size);
  const double sp = cfg.phantom.fov_mm / double(n);
  const PhantomSpec spec = cfg.phantom.spec ? *cfg.phantom.spec : default_head_spec(cfg.phantom.seed);
  const PhantomVolumes v = generate_head_phantom({n, n, n}, {sp, sp, sp}, spec, cfg.phantom.supersample);

  const fs::path out(a.out);
  fs::create_directories(out);
  save_volume(out / "mr.json", v.mr);
  save_volume(out / "xray.json", v.xray);
  write_json(out / "phantom.json", {{"size", cfg.phantom.size},
                                    {"fov_mm", cfg.phantom.fov_mm},
                                    {"supersample", cfg.phantom.supersample},
                                    {"spec", to_json(spec)}});
  std::cout << "wrote " << n << "^3 MR and X-ray volumes to " << out.string() << '\n';
  return ok;
}

struct ProjectArgs {
  std::string config, volumes = "phantom", out = "dataset";
  int views = 0, train = 0, test = 0, pixels = 0;
  double range = 0, sid = 0, sdd = 0, extent = 0, step = 0;
  std::uint64_t seed = 0;
  CLI::Option *o_views, *o_train, *o_test, *o_pixels, *o_range, *o_sid, *o_sdd, *o_extent, *o_step, *o_seed;
};

int cmd_project(const ProjectArgs& a) {
  PipelineConfig cfg = base_config(a.config);
  auto& g = cfg.geometry;
  override_if(a.o_views, g.views, a.views);
  override_if(a.o_pixels, g.detector_pixels, a.pixels);
  override_if(a.o_range, g.angular_range_deg, a.range);
  override_if(a.o_sid, g.sid_mm, a.sid);
  override_if(a.o_sdd, g.sdd_mm, a.sdd);
  override_if(a.o_extent, g.detector_extent_mm, a.extent);
  if (a.o_step->count()) g.step_mm = a.step;
  if (a.o_train->count()) cfg.split.train = a.train;
  if (a.o_test->count()) cfg.split.test = a.test;
  override_if(a.o_seed, cfg.split.seed, a.seed);
  cfg.validate();

  const int views = g.views;
  int n_test = cfg.split.test.value_or(cfg.split.train ? views - *cfg.split.train : (views > 1 ? std::max(1, views / 8) : 0));
  int n_train = cfg.split.train.value_or(views - n_test);
  if (n_train + n_test > views) throw ConfigError("train + test exceeds views");

  const fs::path vdir(a.volumes);
  const Volume3D mr = load_volume(vdir / "mr.json");
  const Volume3D xray = load_volume(vdir / "xray.json");
  if (mr.dims != xray.dims || mr.spacing != xray.spacing || !(mr.origin == xray.origin))
    throw LoadError("MR and X-ray volumes in " + vdir.string() + " are not co-registered");

  const std::size_t px = std::size_t(g.detector_pixels);
  const double pitch = g.detector_extent_mm / double(px);
  const auto traj = make_circular_trajectory(std::size_t(views), g.angular_range_deg, g.sid_mm, g.sdd_mm,
                                             DetectorSpec{px, px, pitch, pitch});
  const double step = g.step_mm.value_or(default_step(mr));

  const fs::path out(a.out);
  fs::create_directories(out / "projections");
  json pairs = json::array();
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const std::string id = view_id(i);
    const std::string mr_rel = "projections/" + id + "_mr.json", xr_rel = "projections/" + id + "_xray.json";
    save_projection(out / mr_rel, forward_project(mr, traj[i], step));
    save_projection(out / xr_rel, forward_project(xray, traj[i], step));
    pairs.push_back({{"id", id}, {"angle_deg", traj[i].angle_deg}, {"mr", mr_rel}, {"xray", xr_rel}});
    ids.push_back(id);
  }
  const auto [tr, te] = split_indices(ids.size(), std::size_t(n_train), std::size_t(n_test), cfg.split.seed);
  json train_ids = json::array(), test_ids = json::array();
  for (auto i : tr) train_ids.push_back(ids[i]);
  for (auto i : te) test_ids.push_back(ids[i]);

  write_json(out / "manifest.json",
             {{"format_version", 1},
              {"volumes", {{"mr", (vdir / "mr.json").string()}, {"xray", (vdir / "xray.json").string()}}},
              {"geometry",
               {{"views", views},
                {"angular_range_deg", g.angular_range_deg},
                {"sid_mm", g.sid_mm},
                {"sdd_mm", g.sdd_mm},
                {"detector_pixels", g.detector_pixels},
                {"pixel_mm", pitch},
                {"step_mm", step}}},
              {"pairs", pairs},
              {"split", {{"seed", cfg.split.seed}, {"train", train_ids}, {"test", test_ids}}}});
  std::cout << "projected " << views << " views (" << n_train << " train, " << n_test << " test) into "
            << out.string() << '\n';
  return ok;
}

struct TrainArgs {
  std::string config, data = "dataset", out = "checkpoint", arch, loss, vgg_weights, resume;
  int epochs = 0, batch = 0, every = 0, base = 0, depth = 0, divisor = 0;
  double lr = 0;
  std::uint64_t seed = 0;
  CLI::Option *o_arch, *o_loss, *o_epochs, *o_batch, *o_every, *o_base, *o_depth, *o_divisor, *o_lr, *o_seed,
      *o_vgg;
};

int cmd_train(const TrainArgs& a) {
  PipelineConfig cfg = base_config(a.config);
  bool model_from_file = cfg.model.has_value();
  if (a.o_arch->count()) {
    const Architecture arch = architecture_from_string(a.arch);
    if (!cfg.model || architecture_of(*cfg.model) != arch) {
      cfg.model = default_model_config(arch);
      model_from_file = false;
    }
  }
  if (a.o_loss->count()) cfg.loss.kind = loss_kind_from_string(a.loss);
  override_if(a.o_epochs, cfg.train.epochs, a.epochs);
  override_if(a.o_batch, cfg.train.batch_size, a.batch);
  override_if(a.o_every, cfg.train.checkpoint_every, a.every);
  override_if(a.o_lr, cfg.train.lr, a.lr);
  override_if(a.o_seed, cfg.train.seed, a.seed);
  override_if(a.o_divisor, cfg.evaluation_network.width_divisor, a.divisor);
  override_if(a.o_vgg, cfg.evaluation_network.weights, a.vgg_weights);
  if (!cfg.model) cfg.model = default_model_config(Architecture::unet);
  if (a.o_base->count() || a.o_depth->count()) {
    auto* u = std::get_if<UNetConfig>(&*cfg.model);
    if (!u) throw ConfigError("--base-channels and --depth apply to the unet architecture only");
    override_if(a.o_base, u->base_channels, a.base);
    override_if(a.o_depth, u->depth, a.depth);
    if (a.o_depth->count()) u->dropout_levels = std::min(u->dropout_levels, u->depth - 1);
  }
  cfg.validate();

  const Dataset d = load_dataset(a.data);
  std::vector<DatasetPair> train_set;
  for (auto i : d.train) train_set.push_back(d.pairs[i]);
  if (train_set.empty()) throw LoadError("dataset " + a.data + " has no training pairs");

  // A CRN without an explicit config is sized to the data.
  if (std::holds_alternative<CRNConfig>(*cfg.model) && !model_from_file)
    cfg.model = fit_crn_to_resolution(train_set[0].mr.nv, train_set[0].mr.nu);

  auto model = build_generator<float>(*cfg.model, cfg.train.seed);
  for (const auto& p : train_set) model->check_input(p.mr.nv, p.mr.nu);

  std::optional<EvaluationNetwork<float>> net;
  if (cfg.loss.kind == LossKind::perceptual)
    net = cfg.evaluation_network.weights.empty()
              ? EvaluationNetwork<float>::vgg19(cfg.evaluation_network.width_divisor,
                                                mix_seed(cfg.train.seed, hash_name("evaluation_network")))
              : load_evaluation_network<float>(cfg.evaluation_network.weights);

  const fs::path out(a.out);
  cfg.train.checkpoint_dir = out;
  Trainer trainer(*model, cfg.train, cfg.loss, net ? &*net : nullptr);
  if (!a.resume.empty()) trainer.load_checkpoint(a.resume);
  fs::create_directories(out);
  while (trainer.epoch() < cfg.train.epochs) {
    const double loss = trainer.run_epoch(train_set);
    std::cout << "epoch " << trainer.epoch() << "/" << cfg.train.epochs << " loss " << loss << '\n';
    if (cfg.train.checkpoint_every > 0 && trainer.epoch() % cfg.train.checkpoint_every == 0)
      trainer.save_checkpoint(out);
  }
  trainer.save_checkpoint(out);
  std::cout << "checkpoint written to " << out.string() << '\n';
  return ok;
}

struct SynthArgs {
  std::string checkpoint, data = "dataset", out, split = "test", synth_dir, config;
};

int cmd_synth(const SynthArgs& a) {
  if (!a.config.empty()) base_config(a.config);
  const Dataset d = load_dataset(a.data);
  const auto which = select_split(d, a.split);
  synthesize_split(a.checkpoint, d, which, a.out);
  std::cout << "synthesized " << which.size() << " projections into " << a.out << '\n';
  return ok;
}

int cmd_eval(const SynthArgs& a) {
  const PipelineConfig cfg = base_config(a.config);
  if (a.checkpoint.empty() == a.synth_dir.empty())
    throw ConfigError("eval needs exactly one of --checkpoint or --synth");
  const Dataset d = load_dataset(a.data);
  const auto which = select_split(d, a.split);
  if (which.empty()) throw LoadError("split '" + a.split + "' of " + a.data + " is empty");
  const fs::path out(a.out);
  fs::create_directories(out / "previews");
  fs::path synth_dir = a.synth_dir;
  if (!a.checkpoint.empty()) {
    synthesize_split(a.checkpoint, d, which, out);
    synth_dir = out;
  }
  std::vector<LabeledPair> pairs;
  for (auto i : which) {
    const auto& p = d.pairs[i];
    ProjectionImage g = load_projection(synth_dir / (p.view_id + "_synth.json"));
    if (g.nu != p.xray.nu || g.nv != p.xray.nv)
      throw LoadError("synthetic projection " + p.view_id + " does not match the label size");
    export_pgm(out / "previews" / (p.view_id + "_label.pgm"), p.xray);
    export_pgm(out / "previews" / (p.view_id + "_mr.pgm"), p.mr);
    if (synth_dir != out) export_pgm(out / "previews" / (p.view_id + "_synth.pgm"), g);
    pairs.push_back({p.view_id, p.xray, std::move(g)});
  }
  const MetricsReport r = evaluate_set(pairs, cfg.metrics);
  write_json(out / "report.json", to_json(r));
  write_text(out / "report.csv", to_csv(r));
  std::cout << "evaluated " << r.pairs.size() << " pairs: mse " << r.mse.mean << " ssim " << r.ssim.mean << '\n';
  return ok;
}

}  // namespace

// --- entry point -----------------------------------------------------------

int run(int argc, char** argv) {
  CLI::App app{"MR-to-X-ray projection synthesis pipeline"};
  app.require_subcommand(1);

  GenPhantomArgs gp;
  auto* gen = app.add_subcommand("gen-phantom", "Rasterize co-registered MR and X-ray head phantom volumes");
  gen->add_option("--config", gp.config, "Pipeline config JSON (flags override it)");
  gp.o_size = gen->add_option("--size", gp.size, "Voxels per edge of the cubic volume (default 64)");
  gp.o_fov = gen->add_option("--fov-mm", gp.fov, "Edge length of the volume in mm (default 200)");
  gp.o_seed = gen->add_option("--seed", gp.seed, "Seed for the random inclusions (default 0)");
  gp.o_super = gen->add_option("--supersample", gp.supersample, "Sub-samples per axis and voxel (default 1)");
  gen->add_option("--out", gp.out, "Output directory")->capture_default_str();

  ProjectArgs pj;
  auto* proj = app.add_subcommand("project", "Forward-project both volumes into a paired dataset");
  proj->add_option("--config", pj.config, "Pipeline config JSON (flags override it)");
  proj->add_option("--volumes", pj.volumes, "Directory holding mr.json and xray.json")->capture_default_str();
  proj->add_option("--out", pj.out, "Dataset output directory")->capture_default_str();
  pj.o_views = proj->add_option("--views", pj.views, "Number of views on the circular trajectory (default 72)");
  pj.o_train = proj->add_option("--train", pj.train, "Training pairs (default views - test)");
  pj.o_test = proj->add_option("--test", pj.test, "Test pairs (default views / 8)");
  pj.o_seed = proj->add_option("--seed", pj.seed, "Seed of the train/test split (default 0)");
  pj.o_pixels = proj->add_option("--detector-pixels", pj.pixels, "Detector pixels per side (default 64)");
  pj.o_extent = proj->add_option("--detector-extent-mm", pj.extent, "Detector side length in mm (default 317.44)");
  pj.o_range = proj->add_option("--range-deg", pj.range, "Angular range of the trajectory (default 360)");
  pj.o_sid = proj->add_option("--sid-mm", pj.sid, "Source to isocenter distance (default 750)");
  pj.o_sdd = proj->add_option("--sdd-mm", pj.sdd, "Source to detector distance (default 1200)");
  pj.o_step = proj->add_option("--step-mm", pj.step, "Ray integration step (default half the voxel spacing)");

  TrainArgs tr;
  auto* trn = app.add_subcommand("train", "Train a generator on the training split");
  trn->add_option("--config", tr.config, "Pipeline config JSON (flags override it)");
  trn->add_option("--data", tr.data, "Dataset directory")->capture_default_str();
  trn->add_option("--out", tr.out, "Checkpoint output directory")->capture_default_str();
  tr.o_arch = trn->add_option("--arch", tr.arch, "Generator: unet, resnet or crn (default unet)");
  tr.o_loss = trn->add_option("--loss", tr.loss, "Objective: l1 or perceptual (default l1)");
  tr.o_epochs = trn->add_option("--epochs", tr.epochs, "Epochs (default 100)");
  tr.o_lr = trn->add_option("--lr", tr.lr, "ADAM learning rate (default 0.004)");
  tr.o_batch = trn->add_option("--batch-size", tr.batch, "Pairs per update (default 1)");
  tr.o_seed = trn->add_option("--seed", tr.seed, "Seed for weights, shuffling and dropout (default 0)");
  tr.o_every = trn->add_option("--checkpoint-every", tr.every, "Checkpoint cadence in epochs, 0 = final only");
  tr.o_base = trn->add_option("--base-channels", tr.base, "U-net channels at the first level");
  tr.o_depth = trn->add_option("--depth", tr.depth, "U-net levels");
  tr.o_vgg = trn->add_option("--vgg-weights", tr.vgg_weights, "VGG-19 weights manifest for the perceptual loss");
  tr.o_divisor =
      trn->add_option("--vgg-width-divisor", tr.divisor, "Channel divisor of the seeded VGG-19 (default 8)");
  trn->add_option("--resume", tr.resume, "Checkpoint directory to resume from");

  SynthArgs sy;
  auto* syn = app.add_subcommand("synth", "Synthesize X-ray projections from MR projections");
  syn->add_option("--config", sy.config, "Pipeline config JSON (validated only)");
  syn->add_option("--checkpoint", sy.checkpoint, "Checkpoint directory")->required();
  syn->add_option("--data", sy.data, "Dataset directory")->capture_default_str();
  syn->add_option("--out", sy.out, "Output directory")->required();
  syn->add_option("--split", sy.split, "test, train or all")->capture_default_str();

  SynthArgs ev;
  auto* evl = app.add_subcommand("eval", "Score synthetic projections against X-ray labels");
  evl->add_option("--config", ev.config, "Pipeline config JSON (metrics section)");
  evl->add_option("--checkpoint", ev.checkpoint, "Synthesize from this checkpoint first");
  evl->add_option("--synth", ev.synth_dir, "Directory of existing <id>_synth.json projections");
  evl->add_option("--data", ev.data, "Dataset directory")->capture_default_str();
  evl->add_option("--out", ev.out, "Report output directory")->required();
  evl->add_option("--split", ev.split, "test, train or all")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? ok : usage;
  }

  try {
    if (gen->parsed()) return cmd_gen_phantom(gp);
    if (proj->parsed()) return cmd_project(pj);
    if (trn->parsed()) return cmd_train(tr);
    if (syn->parsed()) return cmd_synth(sy);
    if (evl->parsed()) return cmd_eval(ev);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return usage;
  } catch (const ParameterError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return usage;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return numerical;
  } catch (const UndefinedValueError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return numerical;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return data_io;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return data_io;
  }
  return usage;
}

}  // namespace projsynth::cli

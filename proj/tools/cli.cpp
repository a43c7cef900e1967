#include "cli.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "cdcl/config.hpp"
#include "cdcl/degradation.hpp"
#include "cdcl/parallel.hpp"
#include "cdcl/trainer.hpp"

namespace cdcl::cli {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_path, "key = value config file")->check(CLI::ExistingFile);
  cmd->add_option("--set", o.overrides, "Override a config key (key=value), repeatable");
  cmd->add_option("--seed", o.seed, "Master seed (overrides the config)");
}

config::RunConfig effective_config(const CommonOptions& o) {
  config::RunConfig cfg;
  if (!o.config_path.empty()) cfg = config::load_file(o.config_path);
  for (const auto& kv : o.overrides) config::apply_override(cfg, kv);
  if (o.seed) cfg.train.seed = *o.seed;
  return cfg;
}

std::vector<fs::path> list_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".ppm") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw IoError("no .ppm images in " + dir.string());
  return out;
}

std::vector<imaging::Image> load_images(const std::vector<fs::path>& paths) {
  std::vector<imaging::Image> out;
  out.reserve(paths.size());
  for (const auto& p : paths) out.push_back(imaging::read_image(p));
  return out;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

class RunDir {
 public:
  RunDir(fs::path dir, std::string command, const std::vector<std::string>& args) : dir_(std::move(dir)) {
    fs::create_directories(dir_);
    manifest_["command"] = std::move(command);
    manifest_["args"] = args;
    manifest_["inputs"] = json::array();
    manifest_["outputs"] = json::array();
  }
  fs::path path(const std::string& name) {
    output(name);
    return dir_ / name;
  }
  void input(const fs::path& p) { manifest_["inputs"].push_back(p.string()); }
  void output(const std::string& name) { manifest_["outputs"].push_back(name); }
  void set(const std::string& key, json value) { manifest_[key] = std::move(value); }
  void echo_config(const config::RunConfig& cfg) {
    write_text(path("config.txt"), config::to_text(cfg));
    manifest_["seed"] = cfg.train.seed;
  }
  void finish() { write_text(dir_ / "manifest.json", manifest_.dump(2) + "\n"); }

 private:
  fs::path dir_;
  json manifest_;
};

std::int64_t deployed_params(const trainer::Model<float>& model) {
  std::int64_t n = 0;
  for (const auto& p : model.params()) {
    if (!p.trainable) continue;
    if (p.name.rfind("sr.", 0) == 0 || p.name.rfind("leader.estimator.", 0) == 0) n += p.value.numel();
  }
  return n;
}

void log_progress(const trainer::Trainer& t, const trainer::StepRecord& r) {
  const auto every = std::max<std::int64_t>(1, t.total_steps() / 20);
  if ((r.step + 1) % every == 0 || r.step + 1 == t.total_steps()) {
    std::cerr << "step " << r.step + 1 << "/" << t.total_steps() << " lr " << r.lr << " l_contr " << r.l_contr
              << " l_l1 " << r.l_l1 << "\n";
  }
}

// ---------------------------------------------------------------------------

struct DegradeArgs {
  CommonOptions common;
  std::optional<int> setting;
  std::optional<int> scale;
  std::string in, out;
};

int run_degrade(const DegradeArgs& a, const std::vector<std::string>& argv) {
  auto cfg = effective_config(a.common);
  if (a.setting) cfg.train.setting.preset = *a.setting;
  if (a.scale) cfg.train.scale = cfg.model.sr.scale = *a.scale;
  config::validate(cfg);
  const auto inputs = list_images(a.in);
  const int n = static_cast<int>(inputs.size());
  std::vector<degradation::ManifestRow> rows(static_cast<std::size_t>(n));
  std::vector<std::string> errors(static_cast<std::size_t>(n));

  RunDir run(a.out, "degrade", argv);
  run.echo_config(cfg);
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    try {
      const auto seed = derive_seed(cfg.train.seed, idx);
      std::mt19937_64 rng(seed);
      const auto spec = degradation::sample_spec(cfg.train.setting, cfg.train.scale, rng);
      auto hr = imaging::read_image(inputs[idx]);
      const int s = cfg.train.scale;
      hr = imaging::crop(hr, 0, 0, hr.width - hr.width % s, hr.height - hr.height % s);
      const auto lr = degradation::degrade(hr, spec, rng);
      const fs::path lr_path = fs::path(a.out) / inputs[idx].filename();
      imaging::write_image(lr, lr_path);
      rows[idx] = {inputs[idx].string(), lr_path.string(), spec, seed};
    } catch (const std::exception& e) {
      errors[idx] = inputs[idx].string() + ": " + e.what();
    }
  }
  for (const auto& e : errors)
    if (!e.empty()) throw IoError(e);
  for (const auto& p : inputs) {
    run.input(p);
    run.output(p.filename().string());
  }
  degradation::write_manifest(run.path("manifest.csv"), rows);
  run.finish();
  std::cout << "degraded " << n << " images into " << a.out << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  CommonOptions common;
  std::string data, out, pretrained, resume;
  std::optional<std::int64_t> steps;
};

int run_training(const TrainArgs& a, trainer::Stage stage, const std::vector<std::string>& argv) {
  auto cfg = effective_config(a.common);
  std::optional<trainer::Checkpoint> resume;
  if (!a.resume.empty()) {
    resume = trainer::load_checkpoint(a.resume);
    if (!resume->meta.contains("config")) throw FormatError("checkpoint has no config snapshot");
    cfg = config::from_json(resume->meta.at("config"));
    for (const auto& kv : a.common.overrides) config::apply_override(cfg, kv);
  }
  config::validate(cfg);
  const auto paths = list_images(a.data);
  std::optional<trainer::Checkpoint> pretrained;
  if (stage == trainer::Stage::Joint && !resume) pretrained = trainer::load_checkpoint(a.pretrained);

  trainer::Trainer t(cfg.model, cfg.train, load_images(paths), stage);
  if (resume) t.resume(*resume);
  if (pretrained) t.load_weights(*pretrained);

  const std::string name = stage == trainer::Stage::Pretrain ? "pretrain" : "train";
  RunDir run(a.out, name, argv);
  run.echo_config(cfg);
  for (const auto& p : paths) run.input(p);
  if (!a.pretrained.empty()) run.input(a.pretrained);
  if (!a.resume.empty()) run.input(a.resume);

  t.run(a.steps, [&t](const trainer::StepRecord& r) { log_progress(t, r); });
  trainer::write_loss_trace(run.path("loss_trace.csv"), t.trace());
  const std::string ckpt = stage == trainer::Stage::Pretrain ? "pretrain.cdck" : "model.cdck";
  t.save(run.path(ckpt));
  run.set("steps_done", t.steps_done());
  run.set("total_steps", t.total_steps());
  run.finish();
  std::cout << "wrote " << (fs::path(a.out) / ckpt).string() << " after " << t.steps_done() << "/" << t.total_steps()
            << " steps\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct InferArgs {
  std::string model, in, out;
};

int run_infer(const InferArgs& a) {
  const auto model = trainer::model_from_checkpoint(trainer::load_checkpoint(a.model));
  const auto lr = imaging::read_image(a.in);
  const auto sr = srnet::sr_forward(lr, model);
  if (const auto parent = fs::path(a.out).parent_path(); !parent.empty()) fs::create_directories(parent);
  imaging::write_image(sr, a.out);
  std::cout << "wrote " << a.out << " (" << sr.width << "x" << sr.height << ")\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string model, bench, grid = "setting1x4", out, dataset, channels = "y";
  bool bicubic = false;
  std::uint64_t seed = 0;
};

int run_eval(const EvalArgs& a, const std::vector<std::string>& argv) {
  const auto grid = trainer::make_grid(a.grid);
  if (a.channels != "y" && a.channels != "rgb") throw ConfigError("--channels must be y or rgb");
  if (a.model.empty() && !a.bicubic) throw ConfigError("eval needs --model or --bicubic");
  const auto paths = list_images(a.bench);
  std::vector<trainer::NamedImage> images;
  for (const auto& p : paths) images.push_back({p.stem().string(), imaging::read_image(p)});

  trainer::EvalOptions opts;
  opts.dataset = a.dataset.empty() ? fs::path(a.bench).filename().string() : a.dataset;
  if (opts.dataset.empty()) opts.dataset = fs::path(a.bench).parent_path().filename().string();
  opts.seed = a.seed;
  opts.channels = a.channels == "y" ? imaging::ChannelMode::Y : imaging::ChannelMode::Rgb;

  std::optional<trainer::Model<float>> model;
  trainer::SuperResolver sr;
  if (a.bicubic) {
    sr = trainer::bicubic_upscaler(grid.scale);
  } else {
    model = trainer::model_from_checkpoint(trainer::load_checkpoint(a.model));
    if (model->cfg.sr.scale != grid.scale) {
      throw ConfigError("model is x" + std::to_string(model->cfg.sr.scale) + " but grid " + a.grid + " is x" +
                        std::to_string(grid.scale));
    }
    opts.params = deployed_params(*model);
    sr = trainer::model_upscaler(*model);
  }
  const auto rows = trainer::evaluate(sr, images, grid, opts);

  RunDir run(a.out, "eval", argv);
  for (const auto& p : paths) run.input(p);
  if (!a.model.empty()) run.input(a.model);
  run.set("seed", a.seed);
  run.set("grid", a.grid);
  trainer::write_eval_csv(run.path("eval.csv"), rows);
  run.finish();
  for (const auto& r : rows) std::cout << r.degradation << "\tpsnr " << r.psnr << "\tssim " << r.ssim << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct ExportArgs {
  std::string model, data, out;
  std::vector<double> widths = {0.2, 2.6};
  std::uint64_t seed = 0;
};

int run_export(const ExportArgs& a, const std::vector<std::string>& argv) {
  if (a.widths.size() < 2) throw ConfigError("--widths needs at least two kernel widths");
  const auto model = trainer::model_from_checkpoint(trainer::load_checkpoint(a.model));
  const auto paths = list_images(a.data);
  std::vector<degradation::DegradationSpec> specs;
  for (const double w : a.widths) {
    degradation::DegradationSpec s;
    s.blur.kind = degradation::BlurKind::Isotropic;
    s.blur.sigma = w;
    s.scale = model.cfg.sr.scale;
    s.validate();
    specs.push_back(s);
  }
  const auto reps = trainer::export_representations(model, load_images(paths), specs, a.seed);
  const double ratio = trainer::separation_ratio(reps);

  RunDir run(a.out, "export-reps", argv);
  for (const auto& p : paths) run.input(p);
  run.input(a.model);
  run.set("seed", a.seed);
  run.set("separation_ratio", std::isinf(ratio) ? json("inf") : json(ratio));
  trainer::write_representations_csv(run.path("representations.csv"), reps);
  run.finish();
  std::cout << "separation ratio " << ratio << "\n";
  return kExitOk;
}

}  // namespace

int dispatch(const std::vector<std::string>& args) {
  CLI::App app{"Blind super-resolution with contrastive degradation representations", "cdcl"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);

  DegradeArgs degrade;
  auto* deg = app.add_subcommand("degrade", "Synthesize an LR corpus with a manifest");
  add_common(deg, degrade.common);
  deg->add_option("--setting", degrade.setting, "Degradation setting 1, 2 or 3")->check(CLI::Range(1, 3));
  deg->add_option("--scale", degrade.scale, "Downscaling factor")->check(CLI::Range(2, 4));
  deg->add_option("--in", degrade.in, "Directory of HR .ppm images")->required()->check(CLI::ExistingDirectory);
  deg->add_option("--out", degrade.out, "Output directory")->required();

  TrainArgs pre_args, train_args;
  auto* pre = app.add_subcommand("pretrain", "Contrastive pretraining of the degradation estimator");
  add_common(pre, pre_args.common);
  pre->add_option("--data", pre_args.data, "Directory of HR .ppm training images")->required()->check(CLI::ExistingDirectory);
  pre->add_option("--out", pre_args.out, "Run directory")->required();
  pre->add_option("--resume", pre_args.resume, "Resume from a pretrain checkpoint")->check(CLI::ExistingFile);
  pre->add_option("--steps", pre_args.steps, "Stop after this many more steps")->check(CLI::PositiveNumber);

  auto* tr = app.add_subcommand("train", "Joint training of the SR network and estimator");
  add_common(tr, train_args.common);
  tr->add_option("--data", train_args.data, "Directory of HR .ppm training images")->required()->check(CLI::ExistingDirectory);
  tr->add_option("--out", train_args.out, "Run directory")->required();
  auto* tr_pre = tr->add_option("--pretrained", train_args.pretrained, "Pretrain checkpoint")->check(CLI::ExistingFile);
  auto* tr_resume = tr->add_option("--resume", train_args.resume, "Resume from a joint checkpoint")->check(CLI::ExistingFile);
  tr_pre->excludes(tr_resume);
  tr->add_option("--steps", train_args.steps, "Stop after this many more steps")->check(CLI::PositiveNumber);

  InferArgs infer;
  auto* inf = app.add_subcommand("infer", "Super-resolve one image");
  inf->add_option("--model", infer.model, "Model checkpoint")->required()->check(CLI::ExistingFile);
  inf->add_option("--in", infer.in, "LR .ppm image")->required()->check(CLI::ExistingFile);
  inf->add_option("--out", infer.out, "Output .ppm path")->required();

  EvalArgs eval;
  auto* ev = app.add_subcommand("eval", "PSNR/SSIM over a benchmark degradation grid");
  auto* ev_model = ev->add_option("--model", eval.model, "Model checkpoint")->check(CLI::ExistingFile);
  auto* ev_bic = ev->add_flag("--bicubic", eval.bicubic, "Evaluate plain bicubic upsampling instead of a model");
  ev_model->excludes(ev_bic);
  ev->add_option("--bench", eval.bench, "Directory of HR .ppm images")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--grid", eval.grid, "setting1x4, setting1x3 or setting3");
  ev->add_option("--dataset", eval.dataset, "Dataset name for the report (default: bench directory name)");
  ev->add_option("--channels", eval.channels, "Metric channels: y or rgb");
  ev->add_option("--seed", eval.seed, "Degradation seed");
  ev->add_option("--out", eval.out, "Run directory")->required();

  ExportArgs exp;
  auto* ex = app.add_subcommand("export-reps", "Export degradation embeddings and their separation ratio");
  ex->add_option("--model", exp.model, "Checkpoint holding a trained estimator")->required()->check(CLI::ExistingFile);
  ex->add_option("--data", exp.data, "Directory of HR .ppm images")->required()->check(CLI::ExistingDirectory);
  ex->add_option("--widths", exp.widths, "Isotropic kernel widths, one class each")->delimiter(',');
  ex->add_option("--seed", exp.seed, "Degradation seed");
  ex->add_option("--out", exp.out, "Run directory")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  configure_threads_from_env();
  try {
    if (deg->parsed()) return run_degrade(degrade, args);
    if (pre->parsed()) return run_training(pre_args, trainer::Stage::Pretrain, args);
    if (tr->parsed()) {
      if (train_args.pretrained.empty() && train_args.resume.empty()) {
        throw ConfigError("train needs --pretrained or --resume");
      }
      return run_training(train_args, trainer::Stage::Joint, args);
    }
    if (inf->parsed()) return run_infer(infer);
    if (ev->parsed()) return run_eval(eval, args);
    if (ex->parsed()) return run_export(exp, args);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitValidation;
}

}  // namespace cdcl::cli

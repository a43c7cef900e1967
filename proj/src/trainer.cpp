#include "cdcl/trainer.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>

#include "cdcl/config.hpp"
#include "cdcl/sampler.hpp"

namespace cdcl::trainer {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

std::string shortest(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string shortest(float v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

bool starts_with(const std::string& s, std::string_view prefix) { return s.rfind(prefix, 0) == 0; }

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32), static_cast<std::uint32_t>(b),
                    static_cast<std::uint32_t>(c)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

std::ofstream open_output(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

}  // namespace

void AdamW::step(const nn::ParamList<float>& params, double lr) {
  for (const auto& p : params) {
    if (!p.value.has_grad()) throw Error("AdamW: parameter " + p.name + " has no gradient");
  }
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, t);
  const double c2 = 1.0 - std::pow(b2, t);
  for (const auto& p : params) {
    auto value = p.value;
    const auto n = static_cast<std::size_t>(value.numel());
    auto& m = m_[p.name];
    auto& v = v_[p.name];
    if (m.empty()) {
      m.assign(n, 0.0f);
      v.assign(n, 0.0f);
    } else if (m.size() != n || v.size() != n) {
      throw ShapeError("AdamW: moment buffers for " + p.name + " do not match the parameter");
    }
    const auto g = value.grad();
    auto w = value.mutable_data();
    for (std::size_t i = 0; i < n; ++i) {
      const double gi = g[i];
      const double mi = b1 * m[i] + (1.0 - b1) * gi;
      const double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      const double theta = w[i];
      const double update = (mi / c1) / (std::sqrt(vi / c2) + config_.eps) + config_.weight_decay * theta;
      w[i] = static_cast<float>(theta - lr * update);
    }
  }
}

Schedule Schedule::step_decay(std::int64_t boundary, std::int64_t horizon, double initial, double dropped) {
  if (horizon < 1) throw ConfigError("schedule horizon must be positive");
  if (boundary < 0) throw ConfigError("step-decay boundary must be non-negative");
  if (dropped > initial) throw ConfigError("step decay must not increase the learning rate");
  Schedule s;
  s.kind_ = Kind::StepDecay;
  s.start_ = initial;
  s.end_ = dropped;
  s.boundary_ = boundary;
  s.horizon_ = horizon;
  return s;
}

Schedule Schedule::cosine(std::int64_t horizon, double start, double end) {
  if (horizon < 1) throw ConfigError("schedule horizon must be positive");
  if (end > start) throw ConfigError("cosine schedule must not increase the learning rate");
  Schedule s;
  s.kind_ = Kind::Cosine;
  s.start_ = start;
  s.end_ = end;
  s.horizon_ = horizon;
  return s;
}

double Schedule::lr_at(std::int64_t t) const {
  if (t < 0 || t > horizon_) {
    throw ConfigError("step " + std::to_string(t) + " lies outside the schedule horizon " + std::to_string(horizon_));
  }
  if (kind_ == Kind::StepDecay) return t < boundary_ ? start_ : end_;
  const double w = (1.0 + std::cos(std::numbers::pi * static_cast<double>(t) / static_cast<double>(horizon_))) / 2.0;
  return w * start_ + (1.0 - w) * end_;
}

void TrainConfig::validate(const ModelConfig& model) const {
  if (batch < 1) throw ConfigError("train.batch must be positive");
  if (views < 2 || views > batch) throw ConfigError("train.views must satisfy 2 <= D <= B");
  if (scale != model.sr.scale) throw ConfigError("training scale and model scale differ");
  if (patch < 1 || patch % scale != 0) throw ConfigError("train.patch must be a positive multiple of the scale");
  const int block = 4 * model.contrastive.divide;
  if ((patch / scale) % block != 0) {
    throw ConfigError("LR patch side (patch/scale) must be divisible by 4*P = " + std::to_string(block));
  }
  if (steps_per_epoch < 1) throw ConfigError("train.steps_per_epoch must be positive");
  if (pretrain_epochs < 1 || joint_epochs < 1) throw ConfigError("epoch counts must be positive");
  if (pretrain_drop_epoch < 0) throw ConfigError("train.pretrain_drop_epoch must be non-negative");
  if (!(pretrain_lr > 0) || !(pretrain_lr_dropped > 0) || !(joint_lr > 0) || !(joint_lr_end >= 0)) {
    throw ConfigError("learning rates must be positive");
  }
  if (!(adam.beta1 >= 0 && adam.beta1 < 1) || !(adam.beta2 >= 0 && adam.beta2 < 1)) {
    throw ConfigError("AdamW betas must lie in [0, 1)");
  }
  if (!(adam.eps > 0)) throw ConfigError("optim.eps must be positive");
  if (!(adam.weight_decay >= 0)) throw ConfigError("optim.weight_decay must be non-negative");
  if (setting.preset < 1 || setting.preset > 3) throw ConfigError("degradation.setting must be 1, 2 or 3");
}

void write_loss_trace(const std::filesystem::path& path, const std::vector<StepRecord>& trace) {
  auto out = open_output(path);
  out << "step,lr,l_contr,l_l1,total\n";
  for (const auto& r : trace) {
    out << r.step << ',' << shortest(r.lr) << ',' << shortest(r.l_contr) << ',' << shortest(r.l_l1) << ','
        << shortest(r.total) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Checkpoint container

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json manifest = ckpt.meta;
  nlohmann::json list = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, entry] : ckpt.tensors) {
    if (static_cast<std::int64_t>(entry.values.size()) != entry.shape.numel()) {
      throw ShapeError("checkpoint tensor " + name + " has " + std::to_string(entry.values.size()) +
                       " values for shape " + entry.shape.str());
    }
    const std::uint64_t length = entry.values.size() * sizeof(float);
    list.push_back({{"name", name},
                    {"shape", {entry.shape.n, entry.shape.c, entry.shape.h, entry.shape.w}},
                    {"dtype", "f32"},
                    {"offset", offset},
                    {"length", length}});
    offset += length;
  }
  manifest["tensors"] = std::move(list);
  const std::string text = manifest.dump();

  std::string out = "CDCK";
  const std::uint32_t version = kCheckpointVersion;
  const std::uint64_t manifest_len = text.size();
  out.append(reinterpret_cast<const char*>(&version), sizeof version);
  out.append(reinterpret_cast<const char*>(&manifest_len), sizeof manifest_len);
  out += text;
  out.reserve(out.size() + offset);
  for (const auto& [name, entry] : ckpt.tensors) {
    out.append(reinterpret_cast<const char*>(entry.values.data()), entry.values.size() * sizeof(float));
  }
  return out;
}

Checkpoint parse_checkpoint(const std::string& bytes) {
  constexpr std::size_t header = 4 + sizeof(std::uint32_t) + sizeof(std::uint64_t);
  if (bytes.size() < header || bytes.compare(0, 4, "CDCK") != 0) throw FormatError("not a checkpoint (bad magic)");
  std::uint32_t version = 0;
  std::uint64_t manifest_len = 0;
  std::memcpy(&version, bytes.data() + 4, sizeof version);
  std::memcpy(&manifest_len, bytes.data() + 8, sizeof manifest_len);
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  if (manifest_len > bytes.size() - header) throw FormatError("truncated checkpoint manifest");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.begin() + header, bytes.begin() + static_cast<std::ptrdiff_t>(header + manifest_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed checkpoint manifest: ") + e.what());
  }
  if (!manifest.is_object() || !manifest.contains("tensors")) throw FormatError("checkpoint manifest lacks a tensor list");
  const std::size_t payload = header + manifest_len;
  const std::size_t payload_size = bytes.size() - payload;
  Checkpoint ckpt;
  try {
    for (const auto& t : manifest.at("tensors")) {
      const auto name = t.at("name").get<std::string>();
      if (t.at("dtype").get<std::string>() != "f32") throw FormatError("tensor " + name + ": unsupported dtype");
      const auto dims = t.at("shape").get<std::vector<std::int64_t>>();
      if (dims.size() != 4) throw FormatError("tensor " + name + ": shape must have 4 dims");
      const Shape shape{dims[0], dims[1], dims[2], dims[3]};
      const auto offset = t.at("offset").get<std::uint64_t>();
      const auto length = t.at("length").get<std::uint64_t>();
      if (length != static_cast<std::uint64_t>(shape.numel()) * sizeof(float)) {
        throw FormatError("tensor " + name + ": length does not match its shape");
      }
      if (offset > payload_size || length > payload_size - offset) {
        throw FormatError("truncated checkpoint payload at tensor " + name);
      }
      Checkpoint::Entry entry{shape, std::vector<float>(static_cast<std::size_t>(shape.numel()))};
      std::memcpy(entry.values.data(), bytes.data() + payload + offset, length);
      if (!ckpt.tensors.emplace(name, std::move(entry)).second) throw FormatError("duplicate tensor " + name);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed checkpoint manifest: ") + e.what());
  }
  manifest.erase("tensors");
  ckpt.meta = std::move(manifest);
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string bytes = serialize_checkpoint(ckpt);
  auto out = open_output(path, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint(ss.str());
}

void capture_model(const Model<float>& model, Checkpoint& ckpt) {
  for (const auto& p : model.params()) {
    const auto d = p.value.data();
    ckpt.tensors[p.name] = {p.value.shape(), std::vector<float>(d.begin(), d.end())};
  }
}

namespace {

void restore_selected(Model<float>& model, const Checkpoint& ckpt, const std::function<bool(const std::string&)>& wanted,
                      bool strict) {
  std::set<std::string> used;
  for (const auto& p : model.params()) {
    if (!wanted(p.name)) continue;
    const auto it = ckpt.tensors.find(p.name);
    if (it == ckpt.tensors.end()) throw FormatError("checkpoint lacks tensor " + p.name);
    if (!(it->second.shape == p.value.shape())) {
      throw ShapeError("shape mismatch for tensor " + p.name + ": checkpoint " + it->second.shape.str() + ", model " +
                       p.value.shape().str());
    }
    auto value = p.value;
    std::copy(it->second.values.begin(), it->second.values.end(), value.mutable_data().begin());
    used.insert(p.name);
  }
  if (!strict) return;
  for (const auto& [name, entry] : ckpt.tensors) {
    if (starts_with(name, "optim.")) continue;
    if (!used.count(name)) throw FormatError("unknown tensor " + name + " in checkpoint");
  }
}

}  // namespace

void restore_model(Model<float>& model, const Checkpoint& ckpt, bool strict) {
  restore_selected(model, ckpt, [](const std::string&) { return true; }, strict);
}

Model<float> model_from_checkpoint(const Checkpoint& ckpt) {
  if (!ckpt.meta.contains("config")) throw FormatError("checkpoint has no config snapshot");
  const auto cfg = config::from_json(ckpt.meta.at("config"));
  auto model = Model<float>::make(cfg.model, cfg.train.seed);
  restore_model(model, ckpt, true);
  return model;
}

// ---------------------------------------------------------------------------
// Training loop

Trainer::Trainer(ModelConfig model_config, TrainConfig train_config, std::vector<Image> corpus, Stage stage)
    : train_(std::move(train_config)),
      stage_(stage),
      corpus_(std::move(corpus)),
      model_(Model<float>::make(model_config, train_.seed)),
      optimizer_(train_.adam),
      rng_(mix_seed(train_.seed, 0x7472, stage == Stage::Pretrain ? 1 : 2)) {
  train_.validate(model_config);
  if (corpus_.empty()) throw ConfigError("training corpus is empty");
  for (const auto& img : corpus_) {
    if (img.width < train_.patch || img.height < train_.patch) {
      throw ConfigError("corpus image " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                        " is smaller than the training patch");
    }
  }
  const std::int64_t spe = train_.steps_per_epoch;
  if (stage_ == Stage::Pretrain) {
    schedule_ = Schedule::step_decay(train_.pretrain_drop_epoch * spe, train_.pretrain_epochs * spe, train_.pretrain_lr,
                                     train_.pretrain_lr_dropped);
  } else {
    schedule_ = Schedule::cosine(train_.joint_epochs * spe, train_.joint_lr, train_.joint_lr_end);
  }
}

nn::ParamList<float> Trainer::optimized_params() const {
  nn::ParamList<float> out;
  for (auto& p : model_.params()) {
    if (!p.trainable) continue;
    if (starts_with(p.name, "leader.") || (stage_ == Stage::Joint && starts_with(p.name, "sr."))) out.push_back(p);
  }
  return out;
}

StepRecord Trainer::step() {
  if (step_ >= schedule_.horizon()) throw Error("training has already reached its final step");
  StepRecord rec;
  rec.step = step_;
  rec.lr = schedule_.lr_at(step_);

  const auto sources = sampler::select_sources(static_cast<int>(corpus_.size()), train_.batch, rng_);
  const auto seq = sampler::sample_patch_sequence(corpus_, sources, train_.patch, rng_, {train_.augment, train_.augment});
  const auto grid = sampler::build_patch_matrix(seq, train_.views);
  const auto matrix = sampler::degrade_matrix(seq, grid, train_.setting, train_.scale, rng_);
  const auto batch = sampler::to_training_batch(matrix);

  const auto params = optimized_params();
  for (auto p : model_.params()) p.value.zero_grad();

  const auto& pair = model_.cdidm;
  const auto& con = model_.cfg.contrastive;
  const auto o = pair.leader_forward(batch.lr, NormMode::Train);
  const auto t = pair.auxiliary_forward(batch.lr, NormMode::Train);
  const auto l_contr = cdidm::contrastive_loss<float>({o, t, batch.positives, batch.views, con.pairs(), con.tau});
  rec.l_contr = l_contr.item();
  Tensor total = l_contr;
  if (stage_ == Stage::Joint) {
    const auto l1 = l1_loss(model_.super_resolve(batch.lr), batch.hr);
    rec.l_l1 = l1.item();
    total = add(l_contr, l1);
  }
  rec.total = total.item();
  if (!std::isfinite(rec.total)) throw NonFiniteError("non-finite training loss at step " + std::to_string(step_));
  total.backward();
  optimizer_.step(params, rec.lr);
  cdidm::momentum_update(model_.cdidm, con.alpha);
  ++step_;
  trace_.push_back(rec);
  return rec;
}

void Trainer::run(std::optional<std::int64_t> max_steps, const std::function<void(const StepRecord&)>& on_step) {
  std::int64_t end = schedule_.horizon();
  if (max_steps) end = std::min(end, step_ + *max_steps);
  while (step_ < end) {
    const auto rec = step();
    if (on_step) on_step(rec);
  }
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  capture_model(model_, c);
  std::map<std::string, Shape> shapes;
  for (const auto& p : model_.params()) shapes.emplace(p.name, p.value.shape());
  for (const auto& [name, m] : optimizer_.first_moments()) c.tensors["optim.m." + name] = {shapes.at(name), m};
  for (const auto& [name, v] : optimizer_.second_moments()) c.tensors["optim.v." + name] = {shapes.at(name), v};
  c.meta["config"] = config::to_json({model_.cfg, train_});
  c.meta["stage"] = stage_ == Stage::Pretrain ? "pretrain" : "joint";
  std::ostringstream rng_text;
  rng_text << rng_;
  c.meta["rng"] = rng_text.str();
  c.meta["counters"] = {{"step", step_}, {"optimizer_steps", optimizer_.steps()}};
  return c;
}

void Trainer::resume(const Checkpoint& ckpt) {
  const std::string want = stage_ == Stage::Pretrain ? "pretrain" : "joint";
  if (!ckpt.meta.contains("stage") || ckpt.meta.at("stage") != want) {
    throw ConfigError("checkpoint is not a " + want + " checkpoint");
  }
  restore_model(model_, ckpt, true);
  auto& m = optimizer_.first_moments();
  auto& v = optimizer_.second_moments();
  m.clear();
  v.clear();
  for (const auto& [name, entry] : ckpt.tensors) {
    if (starts_with(name, "optim.m.")) m[name.substr(8)] = entry.values;
    if (starts_with(name, "optim.v.")) v[name.substr(8)] = entry.values;
  }
  try {
    std::istringstream rng_text(ckpt.meta.at("rng").get<std::string>());
    rng_text >> rng_;
    if (!rng_text) throw FormatError("malformed RNG state in checkpoint");
    step_ = ckpt.meta.at("counters").at("step").get<std::int64_t>();
    optimizer_.set_steps(ckpt.meta.at("counters").at("optimizer_steps").get<std::int64_t>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint metadata: ") + e.what());
  }
  if (step_ > schedule_.horizon()) throw ConfigError("checkpoint step lies beyond the schedule horizon");
}

void Trainer::load_weights(const Checkpoint& ckpt) {
  if (ckpt.meta.contains("config")) {
    const auto cfg = config::from_json(ckpt.meta.at("config"));
    if (cfg.train.scale != train_.scale) {
      throw ConfigError("pretrained checkpoint was trained at x" + std::to_string(cfg.train.scale) +
                        " but this run is x" + std::to_string(train_.scale));
    }
  }
  restore_selected(
      model_, ckpt, [](const std::string& n) { return starts_with(n, "leader.") || starts_with(n, "aux."); }, false);
}

Trainer pretrain(const ModelConfig& model, const TrainConfig& train, std::vector<Image> corpus) {
  Trainer t(model, train, std::move(corpus), Stage::Pretrain);
  t.run();
  return t;
}

Trainer joint_train(const ModelConfig& model, const TrainConfig& train, std::vector<Image> corpus,
                    const Checkpoint& pretrained) {
  Trainer t(model, train, std::move(corpus), Stage::Joint);
  t.load_weights(pretrained);
  t.run();
  return t;
}

// ---------------------------------------------------------------------------
// Evaluation

BenchmarkGrid make_grid(const std::string& name) {
  using degradation::BlurKind;
  using degradation::DegradationSpec;
  BenchmarkGrid grid;
  grid.name = name;
  auto iso = [](double sigma, int scale) {
    DegradationSpec s;
    s.blur.kind = BlurKind::Isotropic;
    s.blur.sigma = sigma;
    s.scale = scale;
    return s;
  };
  if (name == "setting1x4") {
    grid.scale = 4;
    for (const double w : {1.2, 2.4, 3.6}) grid.specs.push_back(iso(w, 4));
  } else if (name == "setting1x3") {
    grid.scale = 3;
    for (const double w : {0.8, 1.6, 2.4}) grid.specs.push_back(iso(w, 3));
  } else if (name == "setting3") {
    grid.scale = 4;
    for (int mask = 0; mask < 8; ++mask) {
      DegradationSpec s;
      s.scale = 4;
      if (mask & 1) s.blur = iso(2.0, 4).blur;
      if (mask & 2) s.noise_level = 20.0;
      if (mask & 4) s.jpeg_quality = 60;
      grid.specs.push_back(s);
    }
    // bic, b, n, j, bn, bj, nj, bnj
    std::stable_sort(grid.specs.begin(), grid.specs.end(), [](const DegradationSpec& a, const DegradationSpec& b) {
      auto count = [](const DegradationSpec& s) {
        return int(s.blur.kind != BlurKind::None) + int(s.noise_level > 0) + int(s.jpeg_quality.has_value());
      };
      return count(a) < count(b);
    });
  } else {
    throw ConfigError("unknown benchmark grid '" + name + "' (expected setting1x4, setting1x3 or setting3)");
  }
  return grid;
}

std::vector<EvalRow> evaluate(const SuperResolver& sr, const std::vector<NamedImage>& images, const BenchmarkGrid& grid,
                              const EvalOptions& options) {
  if (images.empty()) throw ConfigError("benchmark contains no images");
  const int s = grid.scale;
  std::vector<EvalRow> rows;
  for (std::size_t k = 0; k < grid.specs.size(); ++k) {
    const auto& spec = grid.specs[k];
    double psnr_sum = 0.0, ssim_sum = 0.0, ms = 0.0;
    for (std::size_t i = 0; i < images.size(); ++i) {
      const Image& full = images[i].image;
      const Image hr = imaging::crop(full, 0, 0, full.width - full.width % s, full.height - full.height % s);
      const Image lr = degradation::degrade(hr, spec, mix_seed(options.seed, k, i));
      const auto t0 = std::chrono::steady_clock::now();
      const Image out = sr(lr);
      ms += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      if (out.width != hr.width || out.height != hr.height) {
        throw ShapeError("super-resolved " + images[i].name + " has the wrong size");
      }
      const imaging::MetricOptions metric{s, options.channels};
      psnr_sum += imaging::psnr(out, hr, metric);
      ssim_sum += imaging::ssim(out, hr, metric);
    }
    const double n = static_cast<double>(images.size());
    rows.push_back({options.dataset, spec.label(), psnr_sum / n, ssim_sum / n, options.params, ms / n});
  }
  return rows;
}

SuperResolver bicubic_upscaler(int scale) {
  return [scale](const Image& lr) { return imaging::bicubic_resize(lr, imaging::Scale{scale, 1}); };
}

SuperResolver model_upscaler(const Model<float>& model) {
  return [&model](const Image& lr) { return srnet::sr_forward(lr, model); };
}

void write_eval_csv(const std::filesystem::path& path, const std::vector<EvalRow>& rows) {
  auto out = open_output(path);
  out << "dataset,degradation,psnr,ssim,params,ms_per_image\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.4f,%.6f,%lld,%.3f", r.psnr, r.ssim, static_cast<long long>(r.params),
                  r.ms_per_image);
    out << r.dataset << ',' << r.degradation << ',' << buf << '\n';
  }
}

// ---------------------------------------------------------------------------
// Representation export

RepresentationSet export_representations(const Model<float>& model, const std::vector<Image>& hr,
                                         const std::vector<degradation::DegradationSpec>& specs, std::uint64_t seed) {
  if (hr.empty()) throw ConfigError("no images to embed");
  if (specs.empty()) throw ConfigError("no degradation specs to embed under");
  RepresentationSet reps;
  NoGradGuard no_grad;
  for (std::size_t k = 0; k < specs.size(); ++k) {
    const int unit = 4 * specs[k].scale;
    std::vector<Image> lr;
    lr.reserve(hr.size());
    for (std::size_t i = 0; i < hr.size(); ++i) {
      const Image& img = hr[i];
      const Image cropped = imaging::crop(img, 0, 0, img.width - img.width % unit, img.height - img.height % unit);
      lr.push_back(degradation::degrade(cropped, specs[k], mix_seed(seed, k, i)));
    }
    for (const auto& l : lr) {
      const Tensor e = cdidm::embed(model.cdidm.leader_estimator(imaging::to_tensor(l)));
      const auto d = e.data();
      reps.embeddings.emplace_back(d.begin(), d.end());
      reps.labels.push_back(specs[k].label());
    }
  }
  return reps;
}

double separation_ratio(const RepresentationSet& reps) {
  if (reps.labels.size() != reps.embeddings.size() || reps.embeddings.empty()) {
    throw ShapeError("representation set is empty or inconsistent");
  }
  std::set<std::string> classes(reps.labels.begin(), reps.labels.end());
  if (classes.size() < 2) throw ConfigError("separation ratio needs at least 2 degradation classes");
  const std::size_t dim = reps.embeddings.front().size();
  for (const auto& e : reps.embeddings)
    if (e.size() != dim) throw ShapeError("embeddings differ in length");
  double intra = 0.0, inter = 0.0;
  std::int64_t n_intra = 0, n_inter = 0;
  for (std::size_t i = 0; i < reps.embeddings.size(); ++i)
    for (std::size_t j = i + 1; j < reps.embeddings.size(); ++j) {
      double s = 0.0;
      for (std::size_t d = 0; d < dim; ++d) {
        const double diff = reps.embeddings[i][d] - reps.embeddings[j][d];
        s += diff * diff;
      }
      if (reps.labels[i] == reps.labels[j]) {
        intra += std::sqrt(s);
        ++n_intra;
      } else {
        inter += std::sqrt(s);
        ++n_inter;
      }
    }
  if (n_intra == 0 || intra == 0.0) return std::numeric_limits<double>::infinity();
  return (inter / static_cast<double>(n_inter)) / (intra / static_cast<double>(n_intra));
}

void write_representations_csv(const std::filesystem::path& path, const RepresentationSet& reps) {
  auto out = open_output(path);
  out << "sample_id,degradation_label";
  const std::size_t dim = reps.embeddings.empty() ? 0 : reps.embeddings.front().size();
  for (std::size_t d = 0; d < dim; ++d) out << ",e" << d;
  out << '\n';
  for (std::size_t i = 0; i < reps.embeddings.size(); ++i) {
    out << i << ',' << reps.labels[i];
    for (const double v : reps.embeddings[i]) out << ',' << shortest(static_cast<float>(v));
    out << '\n';
  }
}

}  // namespace cdcl::trainer

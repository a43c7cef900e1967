#pragma once

// Optimisation, schedules, checkpoints, the two training stages, benchmark
// evaluation and representation export.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "cdcl/degradation.hpp"
#include "cdcl/imaging.hpp"
#include "cdcl/srnet.hpp"

namespace cdcl::trainer {

using imaging::Image;
using srnet::Model;
using srnet::ModelConfig;

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

// Moments are stored in float; the update arithmetic runs in double.
class AdamW {
 public:
  explicit AdamW(AdamWConfig config = {}) : config_(config) {}

  // Updates every parameter in `params`; each must carry a gradient.
  void step(const nn::ParamList<float>& params, double lr);

  const AdamWConfig& config() const { return config_; }
  std::int64_t steps() const { return steps_; }
  void set_steps(std::int64_t steps) { steps_ = steps; }

  std::map<std::string, std::vector<float>>& first_moments() { return m_; }
  std::map<std::string, std::vector<float>>& second_moments() { return v_; }
  const std::map<std::string, std::vector<float>>& first_moments() const { return m_; }
  const std::map<std::string, std::vector<float>>& second_moments() const { return v_; }

 private:
  AdamWConfig config_;
  std::int64_t steps_ = 0;
  std::map<std::string, std::vector<float>> m_;
  std::map<std::string, std::vector<float>> v_;
};

class Schedule {
 public:
  enum class Kind { StepDecay, Cosine };

  // lr = initial for t < boundary, dropped afterwards.
  static Schedule step_decay(std::int64_t boundary, std::int64_t horizon, double initial = 1e-3,
                             double dropped = 2e-4);
  // lr = w * start + (1 - w) * end with w = (1 + cos(pi t / T)) / 2.
  static Schedule cosine(std::int64_t horizon, double start = 2e-4, double end = 1e-6);

  // Throws ConfigError for t outside [0, horizon].
  double lr_at(std::int64_t t) const;

  Kind kind() const { return kind_; }
  std::int64_t horizon() const { return horizon_; }

 private:
  Kind kind_ = Kind::Cosine;
  double start_ = 0.0;
  double end_ = 0.0;
  std::int64_t boundary_ = 0;
  std::int64_t horizon_ = 0;
};

struct TrainConfig {
  int batch = 64;   // B
  int views = 4;    // D
  int patch = 64;   // HR patch side
  int scale = 4;
  degradation::DegradationSetting setting;
  int steps_per_epoch = 100;
  int pretrain_epochs = 100;
  int pretrain_drop_epoch = 60;
  double pretrain_lr = 1e-3;
  double pretrain_lr_dropped = 2e-4;
  int joint_epochs = 600;
  double joint_lr = 2e-4;
  double joint_lr_end = 1e-6;
  AdamWConfig adam;
  bool augment = true;
  std::uint64_t seed = 0;

  void validate(const ModelConfig& model) const;
};

enum class Stage { Pretrain, Joint };

struct StepRecord {
  std::int64_t step = 0;
  double lr = 0.0;
  double l_contr = 0.0;
  double l_l1 = 0.0;
  double total = 0.0;
};

void write_loss_trace(const std::filesystem::path& path, const std::vector<StepRecord>& trace);

// In-memory checkpoint. `meta` carries the config snapshot, RNG state and
// counters; tensors are keyed by name.
struct Checkpoint {
  struct Entry {
    Shape shape;
    std::vector<float> values;
  };
  nlohmann::json meta = nlohmann::json::object();
  std::map<std::string, Entry> tensors;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(const std::string& bytes);

// Copies every model tensor (weights and running statistics) into `ckpt`;
// the config snapshot is left to the caller.
void capture_model(const Model<float>& model, Checkpoint& ckpt);
// Writes checkpoint tensors back into the model. Missing tensors and shape
// mismatches throw; with `strict`, tensors outside the model (other than
// optimizer state) throw as well.
void restore_model(Model<float>& model, const Checkpoint& ckpt, bool strict = true);

// Builds a model from the config stored in a checkpoint and restores its weights.
Model<float> model_from_checkpoint(const Checkpoint& ckpt);

class Trainer {
 public:
  Trainer(ModelConfig model_config, TrainConfig train_config, std::vector<Image> corpus, Stage stage);

  // One optimisation step; appends to and returns the trace record.
  StepRecord step();
  // Runs until the schedule horizon (or `max_steps` more steps).
  void run(std::optional<std::int64_t> max_steps = std::nullopt,
           const std::function<void(const StepRecord&)>& on_step = {});

  Checkpoint checkpoint() const;
  void save(const std::filesystem::path& path) const { save_checkpoint(path, checkpoint()); }
  // Restores weights, optimizer moments, RNG state and counters.
  void resume(const Checkpoint& ckpt);
  // Loads weights only (e.g. a pretrained estimator), keeping a fresh optimizer.
  void load_weights(const Checkpoint& ckpt);

  std::int64_t steps_done() const { return step_; }
  std::int64_t total_steps() const { return schedule_.horizon(); }
  Stage stage() const { return stage_; }
  Model<float>& model() { return model_; }
  const Model<float>& model() const { return model_; }
  const AdamW& optimizer() const { return optimizer_; }
  const std::vector<StepRecord>& trace() const { return trace_; }
  const TrainConfig& train_config() const { return train_; }

 private:
  nn::ParamList<float> optimized_params() const;

  TrainConfig train_;
  Stage stage_;
  std::vector<Image> corpus_;
  Model<float> model_;
  AdamW optimizer_;
  Schedule schedule_;
  std::mt19937_64 rng_;
  std::int64_t step_ = 0;
  std::vector<StepRecord> trace_;
};

// Stage one: contrastive pretraining of the leader branch.
Trainer pretrain(const ModelConfig& model, const TrainConfig& train, std::vector<Image> corpus);
// Stage two: initialises from `pretrained` and trains with L1 + contrastive loss.
Trainer joint_train(const ModelConfig& model, const TrainConfig& train, std::vector<Image> corpus,
                    const Checkpoint& pretrained);

struct BenchmarkGrid {
  std::string name;
  int scale = 4;
  std::vector<degradation::DegradationSpec> specs;
};

// "setting1x4", "setting1x3" or "setting3".
BenchmarkGrid make_grid(const std::string& name);

struct NamedImage {
  std::string name;
  Image image;
};

struct EvalRow {
  std::string dataset;
  std::string degradation;
  double psnr = 0.0;
  double ssim = 0.0;
  std::int64_t params = 0;
  double ms_per_image = 0.0;
};

using SuperResolver = std::function<Image(const Image&)>;

struct EvalOptions {
  std::string dataset = "bench";
  std::uint64_t seed = 0;
  std::int64_t params = 0;
  imaging::ChannelMode channels = imaging::ChannelMode::Y;
};

// One row per grid cell, averaged over images. HR images are cropped to a
// multiple of the scale; metrics crop a border equal to the scale.
std::vector<EvalRow> evaluate(const SuperResolver& sr, const std::vector<NamedImage>& images,
                              const BenchmarkGrid& grid, const EvalOptions& options);
SuperResolver bicubic_upscaler(int scale);
SuperResolver model_upscaler(const Model<float>& model);
void write_eval_csv(const std::filesystem::path& path, const std::vector<EvalRow>& rows);

struct RepresentationSet {
  std::vector<std::string> labels;
  std::vector<std::vector<double>> embeddings;
};

// Degrades every HR image under every spec and records embed(estimator(lr)).
RepresentationSet export_representations(const Model<float>& model, const std::vector<Image>& hr,
                                         const std::vector<degradation::DegradationSpec>& specs,
                                         std::uint64_t seed);
// Mean distance between embeddings of different classes over mean distance
// between embeddings of the same class. Structureless embeddings give about 1;
// +inf when every class collapses to a point. Throws with < 2 classes.
double separation_ratio(const RepresentationSet& reps);
void write_representations_csv(const std::filesystem::path& path, const RepresentationSet& reps);

}  // namespace cdcl::trainer

#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "anchormodel/model.hpp"
#include "storyworld/script.hpp"

namespace anchorforge::flow {

using latent::LatentClip;
using model::AnchorModel;
using model::ConditionSpec;
using model::ModelConfig;
using story::StoryScript;

/// x_t = (1 - t) x0 + t eps; the velocity target is eps - x0.
void interpolate(const LatentClip& x0, const LatentClip& eps, double t, LatentClip& xt);
LatentClip velocity_target(const LatentClip& x0, const LatentClip& eps);

struct TrainConfig {
  int stage = 1;
  double lr = 1e-3;
  // "constant", or "cosine": decays from lr to lr/100 over the stage's steps.
  std::string lr_schedule = "constant";
  int steps = 2000;
  int batch = 4;
  double text_drop_prob = 0.1;
  std::uint64_t seed = 7;
  bool loss_mask_conditions = true;
  // Ablation: train every stage on the global caption.
  bool global_only = false;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
/// Learning rate at zero-based step `step` of a stage.
double lr_at(const TrainConfig& cfg, int step);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct SampleConfig {
  int steps = 50;
  double guidance_scale = 1.0;
  std::uint64_t seed = 0;
};

struct StageBatch {
  LatentClip clean_latent;
  ConditionSpec cond;
  std::vector<int> text;
  std::vector<int> loss_mask;  // per frame, 1 = counted
};

/// Clip-level conditions read from a script.
model::CondScalars scalars_of(const StoryScript& script);

/// Stage 1: global caption, all-generate. Stage 2: multi-event caption,
/// all-generate. Stage 3: multi-event caption, frame 1 as condition.
StageBatch make_stage_batch(const StoryScript& script, const LatentClip& clean, int stage, bool global_only = false,
                            bool loss_mask_conditions = true);

/// One optimizer step over `batch` (mean of per-clip losses). Returns the loss.
double train_step(AnchorModel<float>& model, const std::vector<StageBatch>& batch, const TrainConfig& cfg,
                  diff::SeededRng& rng, int stage_step = 0);

/// Loss of one clip at a fixed (t, eps, text) without touching parameters.
diff::Tensor<float> clip_loss(const AnchorModel<float>& model, const StageBatch& b, double t, const LatentClip& eps,
                              const std::vector<int>& text);

/// Euler integration from t = 1 to 0; condition positions are held at their
/// clean latents throughout and in the result.
LatentClip sample(const AnchorModel<float>& model, const ConditionSpec& cond, const std::vector<int>& text,
                  const SampleConfig& cfg, int* forward_calls = nullptr);

struct ClipRecord {
  StoryScript script;
  LatentClip latent;
};

/// JSONL manifest: one {"script": path, "clip": path} object per line,
/// paths relative to the manifest's directory.
std::vector<ClipRecord> load_manifest(const std::filesystem::path& manifest);

struct ScheduleOptions {
  ModelConfig model;
  std::vector<TrainConfig> stages;  // run in order
  std::filesystem::path out_dir;
  // Checkpoint to resume from; required before stage 2 or 3 unless from_scratch.
  std::optional<std::filesystem::path> resume;
  bool from_scratch = false;
  std::function<void(int stage, std::int64_t step, double loss)> on_step;
};

struct ScheduleResult {
  std::vector<std::filesystem::path> checkpoints;
  std::filesystem::path loss_log;
  std::vector<double> losses;  // this run's steps in order
};

/// Runs the listed stages, writing stage<k>.ckpt after each and appending
/// "step,stage,loss" rows to loss.csv. The global step continues from the
/// resumed checkpoint's optimizer step.
ScheduleResult run_stage_schedule(const std::vector<ClipRecord>& data, const ScheduleOptions& opts);

/// Checkpoint plus a sidecar "<path>.json" holding the model config and the
/// completed stage.
void save_model(const std::filesystem::path& path, const AnchorModel<float>& model, int stage);
struct LoadedModel {
  AnchorModel<float> model;
  int stage = 0;
};
LoadedModel load_model(const std::filesystem::path& path);

}  // namespace anchorforge::flow

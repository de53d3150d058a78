#include "flowtrain/flow.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "storyworld/caption.hpp"

namespace anchorforge::flow {

using diff::Array;
using diff::Tensor;

void interpolate(const LatentClip& x0, const LatentClip& eps, double t, LatentClip& xt) {
  xt = x0;
  const float a = static_cast<float>(1.0 - t), b = static_cast<float>(t);
  for (std::size_t i = 0; i < x0.values.size(); ++i) xt.values[i] = a * x0.values[i] + b * eps.values[i];
}

LatentClip velocity_target(const LatentClip& x0, const LatentClip& eps) {
  LatentClip v = x0;
  for (std::size_t i = 0; i < v.values.size(); ++i) v.values[i] = eps.values[i] - x0.values[i];
  return v;
}

void TrainConfig::validate() const {
  if (stage < 1 || stage > 3) throw std::invalid_argument("train config: stage must be 1, 2 or 3");
  if (!(lr > 0)) throw std::invalid_argument("train config: lr must be positive");
  if (lr_schedule != "constant" && lr_schedule != "cosine")
    throw std::invalid_argument("train config: lr_schedule must be constant or cosine");
  if (steps < 0 || batch < 1) throw std::invalid_argument("train config: steps >= 0 and batch >= 1 required");
  if (text_drop_prob < 0 || text_drop_prob > 1) throw std::invalid_argument("train config: text_drop_prob in [0,1]");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"stage", c.stage},   {"lr", c.lr},     {"lr_schedule", c.lr_schedule}, {"steps", c.steps},
          {"batch", c.batch},   {"seed", c.seed}, {"text_drop_prob", c.text_drop_prob},
          {"loss_mask_conditions", c.loss_mask_conditions}, {"global_only", c.global_only}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.stage = j.value("stage", c.stage);
    c.lr = j.value("lr", c.lr);
    c.lr_schedule = j.value("lr_schedule", c.lr_schedule);
    c.steps = j.value("steps", c.steps);
    c.batch = j.value("batch", c.batch);
    c.seed = j.value("seed", c.seed);
    c.text_drop_prob = j.value("text_drop_prob", c.text_drop_prob);
    c.loss_mask_conditions = j.value("loss_mask_conditions", c.loss_mask_conditions);
    c.global_only = j.value("global_only", c.global_only);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

model::CondScalars scalars_of(const StoryScript& s) {
  model::CondScalars c;
  c.fps = s.fps;
  c.interval = s.source_interval;
  c.motion = s.motion_scalar;
  c.width = s.width;
  c.height = s.height;
  c.frame_count = s.f;
  return c;
}

StageBatch make_stage_batch(const StoryScript& script, const LatentClip& clean, int stage, bool global_only,
                            bool loss_mask_conditions) {
  if (stage < 1 || stage > 3) throw std::invalid_argument("make_stage_batch: stage must be 1, 2 or 3");
  if (clean.frames != script.f) throw std::invalid_argument("make_stage_batch: clip and script frame counts differ");
  StageBatch b;
  b.clean_latent = clean;
  const bool global = stage == 1 || global_only;
  b.text = global ? story::caption_global(script) : story::tokenize_caption(story::caption_multi_event(script));
  const std::vector<int> cond_frames = stage == 3 ? std::vector<int>{1} : std::vector<int>{};
  b.cond = ConditionSpec::from_frames(clean, cond_frames, scalars_of(script));
  b.loss_mask.assign(static_cast<std::size_t>(clean.frames), 1);
  if (loss_mask_conditions)
    for (int k : cond_frames) b.loss_mask[k - 1] = 0;
  return b;
}

Tensor<float> clip_loss(const AnchorModel<float>& model, const StageBatch& b, double t, const LatentClip& eps,
                        const std::vector<int>& text) {
  const auto& x0 = b.clean_latent;
  const int counted = std::accumulate(b.loss_mask.begin(), b.loss_mask.end(), 0);
  if (counted == 0) throw std::invalid_argument("train_step: loss mask is empty (every frame is a condition)");
  LatentClip xt;
  interpolate(x0, eps, t, xt);
  // Condition frames enter noise-free, exactly as the sampler presents them.
  const std::size_t plane = x0.frame_size();
  for (int k : b.cond.condition_frames())
    std::copy_n(x0.values.begin() + (k - 1) * plane, plane, xt.values.begin() + (k - 1) * plane);
  const auto target = velocity_target(x0, eps);

  const auto in = Tensor<float>::constant(model::to_array<float>(model::build_input(xt, b.cond)));
  const auto out = model.forward(in, b.cond.scalars, t, text);
  Array<float> weights(out.shape());
  Array<float> tv(out.shape());
  const float w = 1.0f / static_cast<float>(counted * plane);
  for (int f = 0; f < x0.frames; ++f)
    for (std::size_t i = 0; i < plane; ++i) {
      weights.data[f * plane + i] = b.loss_mask[f] ? w : 0.f;
      tv.data[f * plane + i] = target.values[f * plane + i];
    }
  const auto err = diff::sub(out, Tensor<float>::constant(std::move(tv)));
  return diff::sum(diff::mul(diff::mul(err, err), Tensor<float>::constant(std::move(weights))));
}

double lr_at(const TrainConfig& cfg, int step) {
  if (cfg.lr_schedule == "constant" || cfg.steps <= 1) return cfg.lr;
  const double progress = std::clamp(double(step) / double(cfg.steps - 1), 0.0, 1.0);
  const double floor = 0.01 * cfg.lr;
  return floor + (cfg.lr - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

double train_step(AnchorModel<float>& model, const std::vector<StageBatch>& batch, const TrainConfig& cfg,
                  diff::SeededRng& rng, int stage_step) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  Tensor<float> total;
  for (const auto& b : batch) {
    const double t = rng.uniform();
    LatentClip eps = b.clean_latent;
    for (auto& v : eps.values) v = static_cast<float>(rng.normal());
    const bool drop = rng.uniform() < cfg.text_drop_prob;
    const auto& text = drop ? std::vector<int>{story::Vocab::kNull} : b.text;
    auto l = clip_loss(model, b, t, eps, text);
    total = total.defined() ? diff::add(total, l) : l;
  }
  const auto loss = diff::scale(total, 1.0f / static_cast<float>(batch.size()));
  diff::backward(loss);
  diff::AdamConfig adam;
  adam.lr = lr_at(cfg, stage_step);
  model.params().adam_step(adam);
  return loss.value()[0];
}

LatentClip sample(const AnchorModel<float>& model, const ConditionSpec& cond, const std::vector<int>& text,
                  const SampleConfig& cfg, int* forward_calls) {
  if (cfg.steps < 1) throw std::invalid_argument("sample: steps must be at least 1");
  if (cfg.guidance_scale < 1) throw std::invalid_argument("sample: guidance_scale must be at least 1");
  cond.validate();
  const auto& c0 = cond.condition_latent;
  const std::size_t plane = c0.frame_size();
  const auto cframes = cond.condition_frames();
  auto clamp_conditions = [&](LatentClip& x) {
    for (int k : cframes) std::copy_n(c0.values.begin() + (k - 1) * plane, plane, x.values.begin() + (k - 1) * plane);
  };

  diff::SeededRng rng(diff::derive_seed(cfg.seed, "sample"));
  LatentClip x = c0;
  for (auto& v : x.values) v = static_cast<float>(rng.normal());
  clamp_conditions(x);
  const std::vector<int> null_text{story::Vocab::kNull};
  int calls = 0;
  const double dt = 1.0 / cfg.steps;
  for (int i = 0; i < cfg.steps; ++i) {
    const double t = 1.0 - i * dt;
    auto v = model.predict(x, cond, text, t);
    ++calls;
    if (cfg.guidance_scale > 1) {
      const auto vu = model.predict(x, cond, null_text, t);
      ++calls;
      const auto g = static_cast<float>(cfg.guidance_scale);
      for (std::size_t j = 0; j < v.values.size(); ++j) v.values[j] = vu.values[j] + g * (v.values[j] - vu.values[j]);
    }
    for (std::size_t j = 0; j < x.values.size(); ++j) x.values[j] -= static_cast<float>(dt) * v.values[j];
    clamp_conditions(x);
  }
  if (forward_calls) *forward_calls = calls;
  return x;
}

std::vector<ClipRecord> load_manifest(const std::filesystem::path& manifest) {
  std::ifstream is(manifest);
  if (!is) throw std::runtime_error("cannot open manifest " + manifest.string());
  const auto base = manifest.parent_path();
  std::vector<ClipRecord> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto j = nlohmann::json::parse(line);
    std::ifstream ss(base / j.at("script").get<std::string>());
    if (!ss) throw std::runtime_error("cannot open script " + j.at("script").get<std::string>());
    ClipRecord r{story::script_from_json(nlohmann::json::parse(ss)),
                 latent::read_clip(base / j.at("clip").get<std::string>())};
    if (r.latent.frames != r.script.f) throw std::runtime_error("clip and script disagree on frame count");
    out.push_back(std::move(r));
  }
  if (out.empty()) throw std::runtime_error("manifest " + manifest.string() + " lists no clips");
  return out;
}

void save_model(const std::filesystem::path& path, const AnchorModel<float>& model, int stage) {
  diff::save_params(path, model.params());
  std::ofstream os(path.string() + ".json", std::ios::trunc);
  os << nlohmann::json{{"model", model::to_json(model.config())}, {"stage", stage}}.dump(2) << "\n";
  if (!os) throw std::runtime_error("cannot write " + path.string() + ".json");
}

LoadedModel load_model(const std::filesystem::path& path) {
  std::ifstream is(path.string() + ".json");
  if (!is) throw std::runtime_error("missing checkpoint sidecar " + path.string() + ".json");
  const auto j = nlohmann::json::parse(is);
  const auto cfg = model::model_config_from_json(j.at("model"));
  diff::SeededRng rng(0);
  auto params = model::init_params<float>(cfg, rng);
  diff::load_params(path, params);
  return {AnchorModel<float>(cfg, std::move(params)), j.value("stage", 0)};
}

ScheduleResult run_stage_schedule(const std::vector<ClipRecord>& data, const ScheduleOptions& opts) {
  if (data.empty()) throw std::invalid_argument("run_stage_schedule: no training clips");
  if (opts.stages.empty()) throw std::invalid_argument("run_stage_schedule: no stages requested");
  std::filesystem::create_directories(opts.out_dir);

  std::optional<AnchorModel<float>> model;
  int completed = 0;
  if (opts.resume) {
    auto loaded = load_model(*opts.resume);
    model.emplace(std::move(loaded.model));
    completed = loaded.stage;
  } else {
    diff::SeededRng rng(diff::derive_seed(opts.stages.front().seed, "init"));
    model.emplace(opts.model, model::init_params<float>(opts.model, rng));
  }

  ScheduleResult result;
  result.loss_log = opts.out_dir / "loss.csv";
  const bool fresh_log = !opts.resume || !std::filesystem::exists(result.loss_log);
  std::ofstream log(result.loss_log, fresh_log ? std::ios::trunc : std::ios::app);
  if (!log) throw std::runtime_error("cannot write " + result.loss_log.string());
  if (fresh_log) log << "step,stage,loss\n";

  for (const auto& cfg : opts.stages) {
    cfg.validate();
    if (cfg.stage > 1 && completed < cfg.stage - 1 && !opts.from_scratch) {
      throw std::invalid_argument("stage " + std::to_string(cfg.stage) + " needs a stage-" +
                                  std::to_string(cfg.stage - 1) + " checkpoint (or the from-scratch flag)");
    }
    std::vector<StageBatch> pool;
    for (const auto& r : data)
      pool.push_back(make_stage_batch(r.script, r.latent, cfg.stage, cfg.global_only, cfg.loss_mask_conditions));

    diff::SeededRng rng(diff::derive_seed(cfg.seed, "stage" + std::to_string(cfg.stage)));
    std::vector<std::size_t> order(pool.size());
    std::size_t cursor = order.size();
    for (int s = 0; s < cfg.steps; ++s) {
      std::vector<StageBatch> batch;
      for (int k = 0; k < cfg.batch; ++k) {
        if (cursor == order.size()) {
          std::iota(order.begin(), order.end(), 0);
          for (std::size_t i = order.size() - 1; i > 0; --i)
            std::swap(order[i], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i)))]);
          cursor = 0;
        }
        batch.push_back(pool[order[cursor++]]);
      }
      const double loss = train_step(*model, batch, cfg, rng, s);
      const auto step = model->params().step();
      log << step << "," << cfg.stage << "," << loss << "\n";
      result.losses.push_back(loss);
      if (opts.on_step) opts.on_step(cfg.stage, step, loss);
    }
    log.flush();
    completed = std::max(completed, cfg.stage);
    const auto ckpt = opts.out_dir / ("stage" + std::to_string(cfg.stage) + ".ckpt");
    save_model(ckpt, *model, completed);
    result.checkpoints.push_back(ckpt);
  }
  return result;
}

}  // namespace anchorforge::flow

#include "app/app.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>

#include "common/digest.hpp"
#include "evalharness/evalharness.hpp"
#include "flowtrain/flow.hpp"
#include "labelpipe/labelpipe.hpp"
#include "storyworld/caption.hpp"
#include "storyworld/render.hpp"

namespace anchorforge::app {

namespace fs = std::filesystem;
using story::StoryScript;

namespace {

template <typename T>
T require(const json& c, const char* key) {
  if (!c.contains(key)) throw ConfigError(std::string("missing required setting \"") + key + "\"");
  try {
    return c.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("setting \"") + key + "\" has the wrong type");
  }
}

template <typename T>
T option(const json& c, const char* key, T fallback) {
  if (!c.contains(key) || c.at(key).is_null()) return fallback;
  try {
    return c.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("setting \"") + key + "\" has the wrong type");
  }
}

json read_json_file(const fs::path& p) {
  std::ifstream is(p);
  if (!is) throw DataError("cannot open " + p.string());
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    throw DataError(p.string() + ": " + e.what());
  }
}

void write_json_file(const fs::path& p, const json& j) {
  std::ofstream os(p, std::ios::trunc);
  os << j.dump(2) << "\n";
  if (!os) throw DataError("cannot write " + p.string());
}

void write_run_manifest(const fs::path& out, const std::string& command, const json& config,
                        const std::vector<fs::path>& artifacts) {
  json hashes = json::object();
  for (const auto& a : artifacts) hashes[fs::relative(a, out).generic_string()] = sha256_file(a);
  write_json_file(out / "run.json", {{"command", command}, {"config", config}, {"artifacts", hashes}});
}

std::string clip_name(int i) {
  std::string s = std::to_string(i);
  return "clip_" + std::string(s.size() < 4 ? 4 - s.size() : 0, '0') + s;
}

}  // namespace

json to_json(const model::CondScalars& s) {
  return {{"fps", s.fps},     {"interval", s.interval}, {"motion", s.motion},
          {"width", s.width}, {"height", s.height},     {"frame_count", s.frame_count}};
}

model::CondScalars scalars_from_json(const json& j) {
  model::CondScalars s;
  s.fps = option(j, "fps", s.fps);
  s.interval = option(j, "interval", s.interval);
  s.motion = option(j, "motion", s.motion);
  s.width = option(j, "width", s.width);
  s.height = option(j, "height", s.height);
  s.frame_count = option(j, "frame_count", s.frame_count);
  return s;
}

// ---------------------------------------------------------------------------

json cmd_gen_data(const json& config) {
  const int n = require<int>(config, "n");
  const int f = require<int>(config, "frames");
  const int events = require<int>(config, "events");
  const auto seed = require<std::uint64_t>(config, "seed");
  const fs::path out = require<std::string>(config, "out");
  story::GenerateOptions go;
  go.width = option(config, "width", go.width);
  go.height = option(config, "height", go.height);
  if (n < 1 || f < 1 || events < 1 || events > f) throw ConfigError("gen_data needs n >= 1 and 1 <= events <= frames");

  for (const char* d : {"scripts", "clips", "captions", "frames"}) fs::create_directories(out / d);
  std::vector<fs::path> artifacts;
  std::ofstream manifest(out / "manifest.jsonl", std::ios::trunc);
  for (int i = 0; i < n; ++i) {
    const auto name = clip_name(i);
    StoryScript s;
    try {
      s = story::generate_script(diff::derive_seed(seed, "clip" + std::to_string(i)), f, events, go);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    const auto frames = story::render(s);
    const auto cap = story::caption_multi_event(s);
    int next = 1;
    for (const auto& e : cap.consistency_event_description) {
      if (e.range.start != next) throw std::logic_error("generated caption does not cover the clip");
      next = e.range.end + 1;
    }
    if (next != f + 1) throw std::logic_error("generated caption does not cover the clip");

    const fs::path script_p = out / "scripts" / (name + ".json"), clip_p = out / "clips" / (name + ".bin"),
                   cap_p = out / "captions" / (name + ".json"), grid_p = out / "frames" / (name + ".ppm");
    write_json_file(script_p, story::to_json(s));
    latent::write_clip(clip_p, latent::encode(frames));
    write_json_file(cap_p, {{"global", story::caption_global_text(s)},
                            {"multi_event", story::to_json(cap)},
                            {"serialized", story::serialize_caption(cap)},
                            {"scalars", to_json(flow::scalars_of(s))}});
    latent::write_frame_grid(frames, std::min(f, 8), grid_p);
    manifest << json{{"script", fs::relative(script_p, out).generic_string()},
                     {"clip", fs::relative(clip_p, out).generic_string()},
                     {"caption", fs::relative(cap_p, out).generic_string()}}
                    .dump()
             << "\n";
    artifacts.insert(artifacts.end(), {script_p, clip_p, cap_p, grid_p});
  }
  manifest.close();
  artifacts.push_back(out / "manifest.jsonl");
  json resolved = config;
  resolved["width"] = go.width;
  resolved["height"] = go.height;
  write_run_manifest(out, "gen_data", resolved, artifacts);
  return {{"manifest", (out / "manifest.jsonl").string()}, {"clips", n}};
}

json cmd_train(const json& config) {
  const fs::path manifest = require<std::string>(config, "manifest");
  const fs::path out = require<std::string>(config, "out");
  std::vector<flow::ClipRecord> data;
  try {
    data = flow::load_manifest(manifest);
  } catch (const std::exception& e) {
    throw DataError(e.what());
  }

  // Model shape follows the data unless overridden.
  model::ModelConfig derived;
  derived.c = data[0].latent.channels;
  derived.latent_height = data[0].latent.height;
  derived.latent_width = data[0].latent.width;
  derived.text_vocab = story::Vocab::standard().size();
  for (const auto& r : data) derived.max_frames = std::max(derived.max_frames, r.latent.frames);
  json model_json = model::to_json(derived);
  if (config.contains("model")) model_json.update(config["model"]);

  const json base = option(config, "train", json::object());
  json stage_list = option(config, "stages", json::array({1, 2, 3}));
  if (!stage_list.is_array() || stage_list.empty()) throw ConfigError("\"stages\" must be a non-empty list");

  flow::ScheduleOptions opts;
  opts.out_dir = out;
  opts.from_scratch = option(config, "from_scratch", false);
  if (config.contains("resume") && !config["resume"].is_null()) opts.resume = require<std::string>(config, "resume");
  json resolved_stages = json::array();
  try {
    opts.model = model::model_config_from_json(model_json);
    for (const auto& st : stage_list) {
      json j = base;
      if (st.is_number_integer())
        j["stage"] = st.get<int>();
      else if (st.is_object())
        j.update(st);
      else
        throw ConfigError("each stage is a number or an object");
      if (config.contains("global_only")) j["global_only"] = require<bool>(config, "global_only");
      opts.stages.push_back(flow::train_config_from_json(j));
      resolved_stages.push_back(flow::to_json(opts.stages.back()));
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  for (const auto& r : data)
    if (r.latent.channels != opts.model.c || r.latent.height != opts.model.latent_height ||
        r.latent.width != opts.model.latent_width || r.latent.frames > opts.model.max_frames)
      throw DataError("clip shape does not fit the model config");

  const bool quiet = option(config, "quiet", false);
  opts.on_step = [quiet](int stage, std::int64_t step, double loss) {
    if (!quiet && step % 100 == 0) std::clog << "stage " << stage << " step " << step << " loss " << loss << "\n";
  };
  flow::ScheduleResult result;
  try {
    result = flow::run_stage_schedule(data, opts);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }

  std::vector<fs::path> artifacts = result.checkpoints;
  for (const auto& c : result.checkpoints) artifacts.push_back(c.string() + ".json");
  artifacts.push_back(result.loss_log);
  json resolved = config;
  resolved["model"] = model::to_json(opts.model);
  resolved["stages"] = resolved_stages;
  write_run_manifest(out, "train", resolved, artifacts);
  json ckpts = json::array();
  for (const auto& c : result.checkpoints) ckpts.push_back(c.string());
  json summary{{"checkpoints", ckpts}, {"loss_log", result.loss_log.string()}, {"steps", result.losses.size()}};
  if (!result.losses.empty()) {
    summary["first_loss"] = result.losses.front();
    summary["last_loss"] = result.losses.back();
  }
  return summary;
}

namespace {

struct Generation {
  flow::LoadedModel loaded;
  std::vector<int> text;
  model::CondScalars scalars;
  int frames = 0;
  flow::SampleConfig sample;
  fs::path out;
  json resolved;
};

Generation prepare_generation(const json& config) {
  const fs::path ckpt = require<std::string>(config, "checkpoint");
  flow::LoadedModel loaded = [&] {
    try {
      return flow::load_model(ckpt);
    } catch (const std::exception& e) {
      throw DataError(std::string("cannot load checkpoint: ") + e.what());
    }
  }();
  Generation g{std::move(loaded), {}, {}, 0, {}, {}, {}};
  g.out = require<std::string>(config, "out");
  const auto prompt = read_json_file(require<std::string>(config, "prompt"));
  const std::string field = option<std::string>(config, "text", g.loaded.stage >= 2 ? "multi_event" : "global");
  try {
    if (field == "multi_event")
      g.text = story::tokenize_caption(story::caption_from_json(prompt.at("multi_event")));
    else if (field == "global")
      g.text = story::Vocab::standard().tokenize(prompt.at("global").get<std::string>());
    else
      throw ConfigError("\"text\" must be multi_event or global");
  } catch (const json::exception& e) {
    throw DataError(std::string("prompt file: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("prompt file: ") + e.what());
  }
  const auto& cfg = g.loaded.model.config();
  if (static_cast<int>(g.text.size()) > cfg.max_text_len)
    throw DataError("caption has " + std::to_string(g.text.size()) + " tokens; the model takes at most " +
                    std::to_string(cfg.max_text_len));
  g.scalars = scalars_from_json(option(prompt, "scalars", json::object()));
  g.frames = option(config, "frames", static_cast<int>(g.scalars.frame_count));
  g.scalars.frame_count = g.frames;
  if (g.frames < 1 || g.frames > cfg.max_frames)
    throw ConfigError("frames must be in [1, " + std::to_string(cfg.max_frames) + "]");
  const int px_h = cfg.latent_height * latent::kDefaultCodecPatch, px_w = cfg.latent_width * latent::kDefaultCodecPatch;
  if (static_cast<int>(g.scalars.width) != px_w || static_cast<int>(g.scalars.height) != px_h)
    throw DataError("prompt resolution does not match the checkpoint (" + std::to_string(px_w) + "x" +
                    std::to_string(px_h) + ")");
  g.sample.steps = option(config, "steps", g.sample.steps);
  g.sample.guidance_scale = option(config, "guidance", g.sample.guidance_scale);
  g.sample.seed = option<std::uint64_t>(config, "seed", 0);
  if (g.sample.steps < 1 || g.sample.guidance_scale < 1) throw ConfigError("steps >= 1 and guidance >= 1 required");
  g.resolved = config;
  g.resolved["text"] = field;
  g.resolved["frames"] = g.frames;
  g.resolved["steps"] = g.sample.steps;
  g.resolved["guidance"] = g.sample.guidance_scale;
  g.resolved["seed"] = g.sample.seed;
  return g;
}

json finish_generation(const std::string& command, const Generation& g, const model::ConditionSpec& cond) {
  const auto clip = flow::sample(g.loaded.model, cond, g.text, g.sample);
  const auto frames = latent::decode(clip);
  fs::create_directories(g.out);
  const auto clip_p = g.out / "clip.bin", grid_p = g.out / "grid.ppm";
  latent::write_clip(clip_p, clip);
  latent::write_frame_grid(frames, std::min(g.frames, 8), grid_p);
  std::vector<fs::path> artifacts{clip_p, grid_p};
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto p = g.out / ("frame_" + std::to_string(i + 1) + ".ppm");
    latent::write_ppm(p, frames[i]);
    artifacts.push_back(p);
  }
  write_run_manifest(g.out, command, g.resolved, artifacts);
  return {{"clip", clip_p.string()}, {"grid", grid_p.string()}, {"frames", g.frames},
          {"condition_frames", cond.condition_frames()}};
}

latent::LatentClip empty_clip(const Generation& g) {
  const auto& c = g.loaded.model.config();
  return latent::LatentClip(g.frames, c.c, c.latent_height, c.latent_width);
}

}  // namespace

json cmd_sample(const json& config) {
  const auto g = prepare_generation(config);
  const auto& c = g.loaded.model.config();
  return finish_generation("sample",
                           g, model::ConditionSpec::all_generate(g.frames, c.c, c.latent_height, c.latent_width, g.scalars));
}

json cmd_edit(const json& config) {
  const auto g = prepare_generation(config);
  auto clean = empty_clip(g);
  std::vector<int> idx;
  const json conds = require<json>(config, "conditions");
  if (!conds.is_array()) throw ConfigError("\"conditions\" must be a list of {frame, image}");
  for (const auto& c : conds) {
    const int k = require<int>(c, "frame");
    if (k < 1 || k > g.frames) throw ConfigError("condition frame " + std::to_string(k) + " is out of range");
    if (std::find(idx.begin(), idx.end(), k) != idx.end()) throw ConfigError("condition frame listed twice");
    latent::FrameImage img;
    try {
      img = latent::read_ppm(require<std::string>(c, "image"));
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw DataError(e.what());
    }
    if (img.height != clean.height * latent::kDefaultCodecPatch || img.width != clean.width * latent::kDefaultCodecPatch)
      throw DataError("condition image resolution does not match the checkpoint");
    const auto enc = latent::encode(std::span(&img, 1));
    std::copy(enc.values.begin(), enc.values.end(), clean.values.begin() + (k - 1) * clean.frame_size());
    idx.push_back(k);
  }
  if (idx.empty()) throw ConfigError("edit needs at least one condition frame");
  std::sort(idx.begin(), idx.end());
  return finish_generation("edit", g, model::ConditionSpec::from_frames(clean, idx, g.scalars));
}

json cmd_extend(const json& config) {
  const auto g = prepare_generation(config);
  const int k = require<int>(config, "k");
  latent::LatentClip src;
  try {
    src = latent::read_clip(require<std::string>(config, "clip"));
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw DataError(e.what());
  }
  auto clean = empty_clip(g);
  if (src.channels != clean.channels || src.height != clean.height || src.width != clean.width)
    throw DataError("source clip resolution does not match the checkpoint");
  if (k < 1 || k >= g.frames || k > src.frames)
    throw ConfigError("k must be at least 1, below the output length and within the source clip");
  std::copy_n(src.values.begin(), k * clean.frame_size(), clean.values.begin());
  std::vector<int> idx(k);
  for (int i = 0; i < k; ++i) idx[i] = i + 1;
  return finish_generation("extend", g, model::ConditionSpec::from_frames(clean, idx, g.scalars));
}

json cmd_label(const json& config, int& status) {
  const fs::path manifest = require<std::string>(config, "manifest");
  const fs::path out = require<std::string>(config, "out");
  const std::string backend = option<std::string>(config, "backend", "oracle");
  std::unique_ptr<label::AnnotatorClient> client;
  if (backend == "oracle")
    client = std::make_unique<label::OracleAnnotator>();
  else if (backend == "http")
    client = std::make_unique<label::HttpAnnotator>(require<std::string>(config, "url"),
                                                    std::chrono::seconds(option(config, "timeout_s", 120)));
  else
    throw ConfigError("backend must be oracle or http");
  label::PipelineOptions opts;
  opts.cache_dir = fs::path(option<std::string>(config, "cache", (out / "cache").string()));
  opts.max_in_flight = option(config, "max_in_flight", opts.max_in_flight);
  opts.retry.attempts = option(config, "retries", opts.retry.attempts);
  opts.retry.base_delay = std::chrono::milliseconds(option(config, "retry_delay_ms", 200));
  if (opts.max_in_flight < 1 || opts.retry.attempts < 1) throw ConfigError("max_in_flight and retries must be >= 1");
  if (!fs::exists(manifest)) throw DataError("cannot open manifest " + manifest.string());
  fs::create_directories(out);
  const auto labels = out / "labels.jsonl";
  const auto stats = label::run_pipeline(manifest, *client, labels, opts);
  json resolved = config;
  resolved["backend"] = backend;
  resolved["cache"] = opts.cache_dir->string();
  resolved["max_in_flight"] = opts.max_in_flight;
  resolved["retries"] = opts.retry.attempts;
  write_run_manifest(out, "label", resolved, {labels});
  status = stats.failed ? kPartialFailure : kOk;
  auto summary = label::to_json(stats);
  summary["labels"] = labels.string();
  return summary;
}

json cmd_eval(const json& config, int& status) {
  const fs::path dir_a = require<std::string>(config, "a"), dir_b = require<std::string>(config, "b");
  const fs::path out = require<std::string>(config, "out");
  const std::string backend = option<std::string>(config, "backend", "oracle");
  std::unique_ptr<eval::JudgeClient> judge;
  if (backend == "oracle")
    judge = std::make_unique<eval::OracleJudge>();
  else if (backend == "http")
    judge = std::make_unique<eval::HttpJudge>(require<std::string>(config, "url"),
                                              std::chrono::seconds(option(config, "timeout_s", 300)));
  else
    throw ConfigError("backend must be oracle or http");
  std::optional<fs::path> scripts;
  if (config.contains("scripts")) scripts = require<std::string>(config, "scripts");
  if (backend == "oracle" && !scripts) throw ConfigError("the oracle judge needs \"scripts\"");
  if (!fs::is_directory(dir_a) || !fs::is_directory(dir_b)) throw DataError("frame set directories not found");

  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir_a))
    if (e.path().extension() == ".bin") names.push_back(e.path().stem().string());
  std::sort(names.begin(), names.end());
  if (names.empty()) throw DataError("no .bin clips in " + dir_a.string());

  fs::create_directories(out);
  const auto results_p = out / "results.jsonl";
  std::ofstream results(results_p, std::ios::trunc);
  std::vector<eval::PairwiseResult> ok;
  int failed = 0;
  for (const auto& name : names) {
    json rec{{"story", name}};
    try {
      const auto a = latent::decode(latent::read_clip(dir_a / (name + ".bin")));
      const auto b = latent::decode(latent::read_clip(dir_b / (name + ".bin")));
      std::optional<StoryScript> script;
      if (scripts) script = story::script_from_json(read_json_file(*scripts / (name + ".json")));
      const auto r = eval::judge_pair(*judge, a, b, {script ? &*script : nullptr});
      rec.update(eval::to_json(r));
      rec["status"] = "ok";
      ok.push_back(r);
    } catch (const std::exception& e) {
      rec["status"] = "failed";
      rec["error"] = e.what();
      ++failed;
    }
    results << rec.dump() << "\n";
  }
  results.close();
  const auto table = eval::aggregate(ok);
  const auto txt = out / "table.txt", csv = out / "table.csv";
  std::ofstream(txt) << table.render_text();
  std::ofstream(csv) << table.render_csv();
  json resolved = config;
  resolved["backend"] = backend;
  write_run_manifest(out, "eval", resolved, {results_p, txt, csv});
  status = failed ? kPartialFailure : kOk;
  return {{"stories", names.size()}, {"judged", ok.size()}, {"failed", failed}, {"table", table.render_text()}};
}

std::vector<std::string> command_names() { return {"gen_data", "train", "sample", "edit", "extend", "label", "eval"}; }

CommandResult run_command(const std::string& command, const json& config) {
  CommandResult r;
  try {
    if (!config.is_object()) throw ConfigError("config must be a JSON object");
    if (command == "gen_data") r.summary = cmd_gen_data(config);
    else if (command == "train") r.summary = cmd_train(config);
    else if (command == "sample") r.summary = cmd_sample(config);
    else if (command == "edit") r.summary = cmd_edit(config);
    else if (command == "extend") r.summary = cmd_extend(config);
    else if (command == "label") r.summary = cmd_label(config, r.status);
    else if (command == "eval") r.summary = cmd_eval(config, r.status);
    else throw ConfigError("unknown command " + command);
  } catch (const ConfigError& e) {
    r = {kConfigError, {{"error", e.what()}}};
  } catch (const DataError& e) {
    r = {kDataError, {{"error", e.what()}}};
  } catch (const std::exception& e) {
    r = {kInternal, {{"error", e.what()}}};
  }
  return r;
}

}  // namespace anchorforge::app

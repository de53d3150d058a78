#include "anchorforge/anchorforge.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

#include "app/app.hpp"
#include "flowtrain/flow.hpp"

using anchorforge::app::json;
namespace flow = anchorforge::flow;
namespace model = anchorforge::model;
namespace app = anchorforge::app;

struct af_context {
  std::string last_error;
};

struct af_model {
  flow::LoadedModel loaded;
};

namespace {

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

af_status fail(af_context* ctx, af_status code, const std::string& msg) {
  if (ctx) ctx->last_error = msg;
  return code;
}

// Maps exceptions to status codes and records the message.
template <typename F>
af_status guarded(af_context* ctx, F&& f) {
  if (!ctx) return AF_ERR_CONFIG;
  ctx->last_error.clear();
  try {
    return f();
  } catch (const app::ConfigError& e) {
    return fail(ctx, AF_ERR_CONFIG, e.what());
  } catch (const app::DataError& e) {
    return fail(ctx, AF_ERR_DATA, e.what());
  } catch (const json::exception& e) {
    return fail(ctx, AF_ERR_CONFIG, e.what());
  } catch (const std::invalid_argument& e) {
    return fail(ctx, AF_ERR_CONFIG, e.what());
  } catch (const std::exception& e) {
    return fail(ctx, AF_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(ctx, AF_ERR_INTERNAL, "unknown error");
  }
}

}  // namespace

extern "C" {

const char* af_version(void) { return "0.1.0"; }

af_status af_context_create(af_context** out) {
  if (!out) return AF_ERR_CONFIG;
  *out = new (std::nothrow) af_context();
  return *out ? AF_OK : AF_ERR_INTERNAL;
}

void af_context_destroy(af_context* ctx) { delete ctx; }

const char* af_last_error(const af_context* ctx) { return ctx ? ctx->last_error.c_str() : "null context"; }

af_status af_run(af_context* ctx, const char* command, const char* config_json, char** result_json) {
  return guarded(ctx, [&]() -> af_status {
    if (result_json) *result_json = nullptr;
    if (!command || !config_json) return fail(ctx, AF_ERR_CONFIG, "command and config are required");
    json config;
    try {
      config = json::parse(config_json);
    } catch (const json::parse_error& e) {
      return fail(ctx, AF_ERR_CONFIG, std::string("config is not valid JSON: ") + e.what());
    }
    const auto r = app::run_command(command, config);
    if (result_json) *result_json = dup_string(r.summary.dump());
    if (r.summary.contains("error")) ctx->last_error = r.summary["error"].get<std::string>();
    return static_cast<af_status>(r.status);
  });
}

af_status af_model_load(af_context* ctx, const char* checkpoint_path, af_model** out) {
  return guarded(ctx, [&]() -> af_status {
    if (!out || !checkpoint_path) return fail(ctx, AF_ERR_CONFIG, "checkpoint path and output handle are required");
    *out = nullptr;
    try {
      *out = new af_model{flow::load_model(checkpoint_path)};
    } catch (const std::bad_alloc&) {
      throw;
    } catch (const std::exception& e) {
      return fail(ctx, AF_ERR_DATA, std::string("cannot load checkpoint: ") + e.what());
    }
    return AF_OK;
  });
}

void af_model_destroy(af_model* m) { delete m; }

af_status af_model_info(af_context* ctx, const af_model* m, char** info_json) {
  return guarded(ctx, [&]() -> af_status {
    if (!m || !info_json) return fail(ctx, AF_ERR_CONFIG, "model handle and output are required");
    const json info{{"model", model::to_json(m->loaded.model.config())},
                    {"stage", m->loaded.stage},
                    {"parameters", model::param_count(m->loaded.model.config())}};
    *info_json = dup_string(info.dump());
    return AF_OK;
  });
}

af_status af_model_sample(af_context* ctx, const af_model* m, const char* request_json, const char* out_clip_path) {
  return guarded(ctx, [&]() -> af_status {
    if (!m || !request_json || !out_clip_path) return fail(ctx, AF_ERR_CONFIG, "model, request and output are required");
    const auto req = json::parse(request_json);
    const auto& cfg = m->loaded.model.config();
    const auto text = req.at("text").get<std::vector<int>>();
    auto scalars = app::scalars_from_json(req.value("scalars", json::object()));
    const int f = req.value("frames", static_cast<int>(scalars.frame_count));
    if (f < 1 || f > cfg.max_frames) return fail(ctx, AF_ERR_CONFIG, "frames out of range for this model");
    scalars.frame_count = f;
    const auto frames = req.value("condition_frames", std::vector<int>{});
    model::ConditionSpec cond;
    if (frames.empty()) {
      cond = model::ConditionSpec::all_generate(f, cfg.c, cfg.latent_height, cfg.latent_width, scalars);
    } else {
      anchorforge::latent::LatentClip src;
      try {
        src = anchorforge::latent::read_clip(req.at("condition_clip").get<std::string>());
      } catch (const json::exception&) {
        throw;
      } catch (const std::exception& e) {
        return fail(ctx, AF_ERR_DATA, e.what());
      }
      if (src.frames != f || src.channels != cfg.c || src.height != cfg.latent_height || src.width != cfg.latent_width)
        return fail(ctx, AF_ERR_DATA, "condition clip shape does not match the request");
      for (int k : frames)
        if (k < 1 || k > f) return fail(ctx, AF_ERR_CONFIG, "condition frame out of range");
      cond = model::ConditionSpec::from_frames(src, frames, scalars);
    }
    flow::SampleConfig sc;
    sc.steps = req.value("steps", sc.steps);
    sc.guidance_scale = req.value("guidance", sc.guidance_scale);
    sc.seed = req.value("seed", std::uint64_t{0});
    const auto clip = flow::sample(m->loaded.model, cond, text, sc);
    anchorforge::latent::write_clip(out_clip_path, clip);
    return AF_OK;
  });
}

void af_free_string(char* s) { std::free(s); }

}  // extern "C"

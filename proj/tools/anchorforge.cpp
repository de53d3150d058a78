// Command-line front end over the C API.

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "anchorforge/anchorforge.h"

using nlohmann::json;

namespace {

// Flags write into the config only when given, so --config values survive.
struct Flags {
  CLI::App* app;
  std::vector<std::function<void(json&)>> apply;

  template <typename T>
  void add(const std::string& flag, const std::string& key, const std::string& help) {
    auto value = std::make_shared<T>();
    auto* opt = app->add_option(flag, *value, help);
    apply.push_back([=](json& j) {
      if (opt->count()) j[key] = *value;
    });
  }
  void flag(const std::string& flag, const std::string& key, const std::string& help) {
    auto* opt = app->add_flag(flag, help);
    apply.push_back([=](json& j) {
      if (opt->count()) j[key] = true;
    });
  }
};

struct Command {
  std::string name;
  CLI::App* app;
  Flags flags;
  std::string config_file;
};

void generation_flags(Flags& f) {
  f.add<std::string>("--checkpoint", "checkpoint", "Checkpoint written by train");
  f.add<std::string>("--prompt", "prompt", "Caption record (captions/<clip>.json from gen-data)");
  f.add<std::string>("--out", "out", "Output directory");
  f.add<std::uint64_t>("--seed", "seed", "Sampling seed");
  f.add<int>("--steps", "steps", "Euler steps (default 50)");
  f.add<double>("--guidance", "guidance", "Classifier-free guidance scale (default 1)");
  f.add<int>("--frames", "frames", "Output frame count (default from the prompt)");
  f.add<std::string>("--text", "text", "Caption field: multi_event or global");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"anchorforge: storyboard frame generation toolkit"};
  cli.require_subcommand(1);
  cli.set_version_flag("--version", std::string(af_version()));
  std::vector<std::unique_ptr<Command>> commands;
  auto make = [&](const std::string& name, const std::string& alias, const std::string& help) -> Command& {
    auto c = std::make_unique<Command>();
    c->name = name;
    c->app = cli.add_subcommand(alias, help);
    c->app->alias(name);
    c->flags.app = c->app;
    c->app->add_option("--config", c->config_file, "JSON config; flags override its values");
    commands.push_back(std::move(c));
    return *commands.back();
  };

  auto& gen = make("gen_data", "gen-data", "Generate synthetic stories, clips and captions");
  gen.flags.add<int>("--n", "n", "Number of stories");
  gen.flags.add<int>("--frames", "frames", "Frames per story");
  gen.flags.add<int>("--events", "events", "Events per story");
  gen.flags.add<std::uint64_t>("--seed", "seed", "Seed");
  gen.flags.add<int>("--width", "width", "Frame width (default 32)");
  gen.flags.add<int>("--height", "height", "Frame height (default 32)");
  gen.flags.add<std::string>("--out", "out", "Output directory");

  auto& train = make("train", "train", "Run the staged training schedule");
  train.flags.add<std::string>("--manifest", "manifest", "manifest.jsonl from gen-data");
  train.flags.add<std::string>("--out", "out", "Output directory");
  train.flags.add<std::string>("--resume", "resume", "Checkpoint to continue from");
  train.flags.flag("--from-scratch", "from_scratch", "Allow a later stage without its predecessor");
  train.flags.flag("--global-only", "global_only", "Train every stage on the global caption");
  train.flags.flag("--quiet", "quiet", "No progress lines");
  auto stages = std::make_shared<std::vector<int>>();
  train.app->add_option("--stage", *stages, "Stage(s) to run, in order (default 1 2 3)")->check(CLI::Range(1, 3));
  auto tr_opt = [&](const std::string& flag, const std::string& key, const std::string& help, auto proto) {
    using T = decltype(proto);
    auto v = std::make_shared<T>();
    auto* o = train.app->add_option(flag, *v, help);
    train.flags.apply.push_back([=](json& j) {
      if (o->count()) j["train"][key] = *v;
    });
  };
  tr_opt("--steps", "steps", "Steps per stage", int{});
  tr_opt("--lr", "lr", "Adam learning rate", double{});
  tr_opt("--lr-schedule", "lr_schedule", "constant (default) or cosine", std::string{});
  tr_opt("--batch", "batch", "Clips per step", int{});
  tr_opt("--train-seed", "seed", "Training seed", std::uint64_t{});
  tr_opt("--text-drop", "text_drop_prob", "Probability of the null caption", double{});
  auto* no_mask = train.app->add_flag("--no-loss-mask", "Count condition frames in the loss");
  train.flags.apply.push_back([=](json& j) {
    if (no_mask->count()) j["train"]["loss_mask_conditions"] = false;
    if (!stages->empty()) j["stages"] = *stages;
  });
  auto model_opt = [&](const std::string& flag, const std::string& key, const std::string& help) {
    auto v = std::make_shared<int>();
    auto* o = train.app->add_option(flag, *v, help);
    train.flags.apply.push_back([=](json& j) {
      if (o->count()) j["model"][key] = *v;
    });
  };
  model_opt("--dim", "d", "Hidden width");
  model_opt("--depth", "depth", "Transformer blocks");
  model_opt("--heads", "heads", "Attention heads");
  model_opt("--patch", "patch", "Transformer patch size");

  auto& sample = make("sample", "sample", "Generate every frame from a caption");
  generation_flags(sample.flags);

  auto& edit = make("edit", "edit", "Generate with user-supplied frames held fixed");
  generation_flags(edit.flags);
  auto conds = std::make_shared<std::vector<std::string>>();
  edit.app->add_option("--condition", *conds, "FRAME=IMAGE.ppm, repeatable");
  edit.flags.apply.push_back([=](json& j) {
    if (conds->empty()) return;
    j["conditions"] = json::array();
    for (const auto& c : *conds) {
      const auto eq = c.find('=');
      if (eq == std::string::npos) throw CLI::ValidationError("--condition", "expected FRAME=IMAGE.ppm");
      j["conditions"].push_back({{"frame", std::stoi(c.substr(0, eq))}, {"image", c.substr(eq + 1)}});
    }
  });

  auto& extend = make("extend", "extend", "Continue the first k frames of an existing clip");
  generation_flags(extend.flags);
  extend.flags.add<std::string>("--clip", "clip", "Source latent clip");
  extend.flags.add<int>("--k", "k", "Number of leading frames to keep");

  auto& lab = make("label", "label", "Run the two-stage labeling pipeline");
  lab.flags.add<std::string>("--manifest", "manifest", "manifest.jsonl with clip and script paths");
  lab.flags.add<std::string>("--out", "out", "Output directory");
  lab.flags.add<std::string>("--backend", "backend", "oracle or http");
  lab.flags.add<std::string>("--url", "url", "Annotator endpoint for the http backend");
  lab.flags.add<std::string>("--cache", "cache", "Response cache directory (default <out>/cache)");
  lab.flags.add<int>("--max-in-flight", "max_in_flight", "Concurrent chunk requests (default 4)");
  lab.flags.add<int>("--retries", "retries", "Attempts per request (default 3)");

  auto& ev = make("eval", "eval", "Pairwise judge evaluation of two frame sets");
  ev.flags.add<std::string>("--a", "a", "Directory of model A clips (<story>.bin)");
  ev.flags.add<std::string>("--b", "b", "Directory of model B clips (<story>.bin)");
  ev.flags.add<std::string>("--scripts", "scripts", "Directory of <story>.json scripts (oracle judge)");
  ev.flags.add<std::string>("--backend", "backend", "oracle or http");
  ev.flags.add<std::string>("--url", "url", "Judge endpoint for the http backend");
  ev.flags.add<std::string>("--out", "out", "Output directory");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = cli.exit(e);
    return code == 0 ? 0 : AF_ERR_CONFIG;
  }

  for (auto& c : commands) {
    if (!c->app->parsed()) continue;
    json config = json::object();
    try {
      if (!c->config_file.empty()) {
        std::ifstream is(c->config_file);
        if (!is) {
          std::cerr << "error: cannot open " << c->config_file << "\n";
          return AF_ERR_CONFIG;
        }
        config = json::parse(is);
      }
      for (auto& f : c->flags.apply) f(config);
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return AF_ERR_CONFIG;
    }

    af_context* ctx = nullptr;
    if (af_context_create(&ctx) != AF_OK) return AF_ERR_INTERNAL;
    char* result = nullptr;
    const af_status st = af_run(ctx, c->name.c_str(), config.dump().c_str(), &result);
    if (st != AF_OK) std::cerr << "error: " << af_last_error(ctx) << "\n";
    if (result) {
      const auto j = json::parse(result);
      if (!j.contains("error")) std::cout << j.dump(2) << "\n";
      af_free_string(result);
    }
    af_context_destroy(ctx);
    return st;
  }
  return AF_ERR_CONFIG;
}

#include "labelpipe/labelpipe.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include "common/digest.hpp"

namespace anchorforge::label {

std::vector<FrameRange> chunk_frames(int n, int max) {
  if (n < 1) throw std::invalid_argument("chunk_frames: n must be at least 1");
  if (max < 1) throw std::invalid_argument("chunk_frames: max must be at least 1");
  const int k = (n + max - 1) / max;
  const int base = n / k, extra = n % k;
  std::vector<FrameRange> out;
  int start = 1;
  for (int i = 0; i < k; ++i) {
    const int len = base + (i < extra ? 1 : 0);
    out.push_back({start, start + len - 1});
    start += len;
  }
  return out;
}

namespace {

json encode_frames(const std::vector<FrameImage>& frames) {
  json out = json::array();
  for (const auto& f : frames) out.push_back(base64_encode(latent::encode_ppm(f)));
  return out;
}

json range_json(const FrameRange& r) { return json::array({r.start, r.end}); }

FrameRange range_from(const json& j) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number_integer() || !j[1].is_number_integer())
    throw SchemaError("range must be [start, end]");
  return {j[0].get<int>(), j[1].get<int>()};
}

std::string require_text(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key) || !j[key].is_string() || j[key].get<std::string>().empty())
    throw SchemaError(std::string("missing or empty \"") + key + "\"");
  return j[key].get<std::string>();
}

}  // namespace

json chunk_request(const Chunk& chunk) {
  if (chunk.range.length() != static_cast<int>(chunk.frames.size()) || chunk.range.length() > kMaxChunk ||
      chunk.range.start < 1)
    throw std::invalid_argument("chunk_request: invalid chunk");
  const int n = chunk.range.length();
  return {{"task", "chunk-annotate"},
          {"range", range_json(chunk.range)},
          {"frames", encode_frames(chunk.frames)},
          {"prompt", "These are " + std::to_string(n) +
                         " consecutive frames of one video. List every event in order. Reply with JSON "
                         "{\"events\": [{\"range\": [s, e], \"text\": description}]} where s and e are frame "
                         "numbers from 1 to " +
                         std::to_string(n) + " within these frames."}};
}

json synthesize_request(const ReferencePool& pool, const std::vector<FrameImage>& frames) {
  if (pool.empty()) throw std::invalid_argument("synthesize_request: empty reference pool");
  json events = json::array();
  std::string listing;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const auto& e = pool[i];
    events.push_back({{"range", range_json(e.range)}, {"text", e.text}, {"frame", e.representative}});
    listing += std::to_string(i + 1) + ". [" + std::to_string(e.range.start) + "-" + std::to_string(e.range.end) +
               "] " + e.text + "\n";
  }
  return {{"task", "synthesize"},
          {"frames", encode_frames(frames)},
          {"events", events},
          {"prompt", "One representative frame is attached per event below. Rewrite the events as a coherent "
                     "story that keeps each subject's description consistent. Keep every range unchanged. Reply "
                     "with JSON {\"description\": [{\"range\": [s, e], \"text\": ...}], \"subjects\": [most "
                     "important first], \"style\": text}.\n" +
                         listing}};
}

json OracleAnnotator::call(const json& request, const ClipContext& ctx) {
  if (!ctx.script) throw std::runtime_error("oracle annotator needs the clip's script");
  const auto& s = *ctx.script;
  const std::string task = request.at("task");
  if (task == "chunk-annotate") {
    const auto r = range_from(request.at("range"));
    json events = json::array();
    for (const auto& e : s.events) {
      const int lo = std::max(e.frame_range.start, r.start), hi = std::min(e.frame_range.end, r.end);
      if (lo > hi) continue;
      events.push_back({{"range", {lo - r.start + 1, hi - r.start + 1}}, {"text", story::event_clause(s, e)}});
    }
    return {{"events", events}};
  }
  if (task == "synthesize") {
    const auto cap = story::caption_multi_event(s);
    json desc = json::array();
    for (const auto& e : cap.consistency_event_description)
      desc.push_back({{"range", range_json(e.range)}, {"text", e.text}});
    return {{"description", desc}, {"subjects", cap.subjects}, {"style", cap.video_style}};
  }
  throw std::runtime_error("oracle annotator: unknown task " + task);
}

HttpAnnotator::HttpAnnotator(std::string url, std::chrono::seconds timeout) : endpoint_(std::move(url), timeout) {}

json HttpAnnotator::call(const json& request, const ClipContext&) {
  try {
    return endpoint_.post(request);
  } catch (const std::runtime_error& e) {
    if (std::string(e.what()) == "endpoint response is not JSON") throw SchemaError(e.what());
    throw;
  }
}

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::string ResponseCache::key_of(const json& request) { return sha256_hex(request.dump()); }

std::optional<json> ResponseCache::get(const std::string& key) const {
  std::ifstream is(dir_ / (key + ".json"));
  if (!is) return std::nullopt;
  try {
    return json::parse(is);
  } catch (const json::parse_error&) {
    return std::nullopt;
  }
}

void ResponseCache::put(const std::string& key, const json& response) const {
  // Write then rename so a concurrent reader never sees a partial file.
  const auto final_path = dir_ / (key + ".json");
  auto tmp = final_path;
  tmp += "." + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id())) + ".tmp";
  {
    std::ofstream os(tmp, std::ios::trunc);
    os << response.dump();
    if (!os) throw std::runtime_error("cannot write cache entry " + tmp.string());
  }
  std::filesystem::rename(tmp, final_path);
}

template <typename R>
R Annotator::request(const json& payload, const ClipContext& ctx, const std::function<R(const json&)>& parse) const {
  std::string key;
  if (cache) {
    key = ResponseCache::key_of(payload);
    if (auto hit = cache->get(key)) {
      try {
        R r = parse(*hit);
        if (counters) ++counters->cache_hits;
        return r;
      } catch (const SchemaError&) {
        // Stale entry; fall through to the client.
      }
    }
  }
  std::string last_error;
  auto delay = retry.base_delay;
  for (int attempt = 1; attempt <= retry.attempts; ++attempt) {
    try {
      if (counters) ++counters->client_calls;
      const json response = client.call(payload, ctx);
      R r = parse(response);
      if (cache) cache->put(key, response);
      return r;
    } catch (const std::exception& e) {
      last_error = e.what();
      std::clog << "labelpipe: " << payload.value("task", "?") << " attempt " << attempt << "/" << retry.attempts
                << " failed: " << last_error << "\n";
    }
    if (attempt < retry.attempts) {
      std::this_thread::sleep_for(delay);
      delay *= 2;
    }
  }
  throw AnnotationFailure(payload.value("task", "request") + " failed after " + std::to_string(retry.attempts) +
                          " attempts: " + last_error);
}

template ChunkAnnotation Annotator::request(const json&, const ClipContext&,
                                            const std::function<ChunkAnnotation(const json&)>&) const;
template MultiEventCaption Annotator::request(const json&, const ClipContext&,
                                              const std::function<MultiEventCaption(const json&)>&) const;

ChunkAnnotation parse_chunk_response(const json& response, const FrameRange& chunk) {
  if (!response.is_object() || !response.contains("events") || !response["events"].is_array())
    throw SchemaError("chunk response needs an \"events\" array");
  const auto& events = response["events"];
  if (events.empty()) throw SchemaError("chunk response has no events");
  ChunkAnnotation a{chunk, {}};
  const int n = chunk.length();
  for (const auto& e : events) {
    if (!e.is_object() || !e.contains("range")) throw SchemaError("event without range");
    const auto r = range_from(e["range"]);
    if (r.start < 1 || r.end > n || r.start > r.end)
      throw SchemaError("event range [" + std::to_string(r.start) + ", " + std::to_string(r.end) +
                        "] outside chunk of " + std::to_string(n) + " frames");
    a.events.push_back({{chunk.start + r.start - 1, chunk.start + r.end - 1}, require_text(e, "text")});
  }
  return a;
}

MultiEventCaption parse_synthesize_response(const json& response, const ReferencePool& pool) {
  if (!response.is_object()) throw SchemaError("synthesize response must be an object");
  for (const char* k : {"description", "subjects", "style"})
    if (!response.contains(k)) throw SchemaError(std::string("synthesize response missing \"") + k + "\"");
  if (!response["description"].is_array() || !response["subjects"].is_array())
    throw SchemaError("description and subjects must be arrays");
  MultiEventCaption cap;
  for (const auto& e : response["description"]) {
    if (!e.is_object() || !e.contains("range")) throw SchemaError("description entry without range");
    cap.consistency_event_description.push_back({range_from(e["range"]), require_text(e, "text")});
  }
  for (const auto& s : response["subjects"]) {
    if (!s.is_string()) throw SchemaError("subjects must be strings");
    cap.subjects.push_back(s.get<std::string>());
  }
  cap.video_style = require_text(response, "style");
  if (cap.consistency_event_description.size() != pool.size())
    throw SchemaError("synthesized " + std::to_string(cap.consistency_event_description.size()) +
                      " events for a pool of " + std::to_string(pool.size()));
  for (std::size_t i = 0; i < pool.size(); ++i)
    if (cap.consistency_event_description[i].range != pool[i].range)
      throw SchemaError("synthesized event " + std::to_string(i + 1) + " changed its frame range");
  return cap;
}

ChunkAnnotation annotate_chunk(const Annotator& annotator, const Chunk& chunk, const ClipContext& ctx) {
  const auto payload = chunk_request(chunk);
  return annotator.request<ChunkAnnotation>(
      payload, ctx, [&](const json& r) { return parse_chunk_response(r, chunk.range); });
}

ReferencePool build_reference_pool(const std::vector<ChunkAnnotation>& annotations) {
  ReferencePool pool;
  bool first_of_chunk = false;
  for (const auto& a : annotations) {
    first_of_chunk = true;
    for (const auto& e : a.events) {
      if (first_of_chunk && !pool.empty() && pool.back().text == e.text && e.range.start <= pool.back().range.end + 1)
        pool.back().range.end = std::max(pool.back().range.end, e.range.end);
      else
        pool.push_back({e.range, e.text, 0});
      first_of_chunk = false;
    }
  }
  if (pool.empty()) throw std::invalid_argument("build_reference_pool: no events");
  for (auto& e : pool) e.representative = (e.range.start + e.range.end + 1) / 2;
  return pool;
}

MultiEventCaption synthesize_caption(const Annotator& annotator, const ReferencePool& pool,
                                     const std::vector<FrameImage>& frames, const ClipContext& ctx) {
  if (pool.empty()) throw std::invalid_argument("synthesize_caption: empty reference pool");
  std::vector<FrameImage> reps;
  for (const auto& e : pool) {
    if (e.representative < 1 || e.representative > static_cast<int>(frames.size()))
      throw std::invalid_argument("synthesize_caption: representative frame out of range");
    reps.push_back(frames[e.representative - 1]);
  }
  const auto payload = synthesize_request(pool, reps);
  return annotator.request<MultiEventCaption>(payload, ctx,
                                              [&](const json& r) { return parse_synthesize_response(r, pool); });
}

json to_json(const ChunkAnnotation& a) {
  json events = json::array();
  for (const auto& e : a.events) events.push_back({{"range", range_json(e.range)}, {"text", e.text}});
  return {{"chunk", range_json(a.chunk)}, {"events", events}};
}

json to_json(const ReferencePool& pool) {
  json out = json::array();
  for (const auto& e : pool)
    out.push_back({{"range", range_json(e.range)}, {"text", e.text}, {"representative", e.representative}});
  return out;
}

json to_json(const PipelineStats& s) {
  return {{"succeeded", s.succeeded}, {"failed", s.failed},           {"cached", s.cached},
          {"client_calls", s.client_calls}, {"cache_hits", s.cache_hits}};
}

namespace {

struct ClipJob {
  std::string clip;
  std::filesystem::path clip_path;
  std::optional<std::filesystem::path> script_path;
};

json label_clip(const ClipJob& job, const Annotator& annotator, int max_in_flight, long& calls_used) {
  CallCounters local;
  Annotator a = annotator;
  a.counters = &local;
  json rec{{"clip", job.clip}};
  try {
    const auto frames = latent::decode(latent::read_clip(job.clip_path));
    std::optional<StoryScript> script;
    if (job.script_path) {
      std::ifstream ss(*job.script_path);
      if (!ss) throw std::runtime_error("cannot open script " + job.script_path->string());
      script = story::script_from_json(json::parse(ss));
    }
    const ClipContext ctx{script ? &*script : nullptr};

    const auto ranges = chunk_frames(static_cast<int>(frames.size()));
    std::vector<Chunk> chunks;
    for (const auto& r : ranges)
      chunks.push_back({r, std::vector<FrameImage>(frames.begin() + r.start - 1, frames.begin() + r.end)});

    // Workers pull chunk indices; results land in their chunk's slot.
    std::vector<std::optional<ChunkAnnotation>> results(chunks.size());
    std::vector<std::string> errors(chunks.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t i; (i = next++) < chunks.size();) {
        try {
          results[i] = annotate_chunk(a, chunks[i], ctx);
        } catch (const std::exception& e) {
          errors[i] = e.what();
        }
      }
    };
    const int n_workers = std::max(1, std::min<int>(max_in_flight, static_cast<int>(chunks.size())));
    std::vector<std::thread> pool_threads;
    for (int w = 1; w < n_workers; ++w) pool_threads.emplace_back(worker);
    worker();
    for (auto& t : pool_threads) t.join();

    json chunk_json = json::array(), ann_json = json::array();
    std::vector<ChunkAnnotation> anns;
    std::string failure;
    for (std::size_t i = 0; i < chunks.size(); ++i) {
      chunk_json.push_back(range_json(ranges[i]));
      if (results[i]) {
        ann_json.push_back(to_json(*results[i]));
        anns.push_back(*results[i]);
      } else {
        ann_json.push_back({{"chunk", range_json(ranges[i])}, {"error", errors[i]}});
        if (failure.empty()) failure = "chunk [" + std::to_string(ranges[i].start) + ", " +
                                       std::to_string(ranges[i].end) + "]: " + errors[i];
      }
    }
    rec["chunks"] = chunk_json;
    rec["annotations"] = ann_json;
    if (!failure.empty()) throw AnnotationFailure(failure);

    const auto pool = build_reference_pool(anns);
    rec["pool"] = to_json(pool);
    rec["caption"] = story::to_json(synthesize_caption(a, pool, frames, ctx));
    rec["status"] = "ok";
  } catch (const std::exception& e) {
    rec["status"] = "failed";
    rec["error"] = e.what();
  }
  calls_used = local.client_calls;
  rec["client_calls"] = local.client_calls.load();
  rec["cache_hits"] = local.cache_hits.load();
  if (annotator.counters) {
    annotator.counters->client_calls += local.client_calls;
    annotator.counters->cache_hits += local.cache_hits;
  }
  return rec;
}

}  // namespace

PipelineStats run_pipeline(const std::filesystem::path& manifest, AnnotatorClient& client,
                           const std::filesystem::path& output, const PipelineOptions& opts) {
  std::ifstream is(manifest);
  if (!is) throw std::runtime_error("cannot open manifest " + manifest.string());
  std::optional<ResponseCache> cache;
  if (opts.cache_dir) cache.emplace(*opts.cache_dir);
  CallCounters counters;
  const Annotator annotator{client, cache ? &*cache : nullptr, opts.retry, &counters};

  if (output.has_parent_path()) std::filesystem::create_directories(output.parent_path());
  std::ofstream os(output, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + output.string());

  PipelineStats stats;
  const auto base = manifest.parent_path();
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    long calls = 0;
    try {
      const auto j = json::parse(line);
      ClipJob job;
      job.clip = j.at("clip").get<std::string>();
      job.clip_path = base / job.clip;
      if (j.contains("script")) job.script_path = base / j["script"].get<std::string>();
      rec = label_clip(job, annotator, opts.max_in_flight, calls);
    } catch (const std::exception& e) {
      rec = {{"clip", "line " + std::to_string(line_no)}, {"status", "failed"}, {"error", e.what()}};
    }
    if (rec["status"] == "ok") {
      ++stats.succeeded;
      if (calls == 0) ++stats.cached;
    } else {
      ++stats.failed;
    }
    os << rec.dump() << "\n";
  }
  stats.client_calls = counters.client_calls;
  stats.cache_hits = counters.cache_hits;
  return stats;
}

}  // namespace anchorforge::label

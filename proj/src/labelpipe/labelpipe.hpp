#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "common/http_json.hpp"
#include "latentio/latent.hpp"
#include "storyworld/caption.hpp"

namespace anchorforge::label {

using latent::FrameImage;
using nlohmann::json;
using story::EventDescription;
using story::FrameRange;
using story::MultiEventCaption;
using story::StoryScript;

constexpr int kMaxChunk = 12;

/// ceil(n / max) balanced contiguous ranges covering [1, n], larger first.
std::vector<FrameRange> chunk_frames(int n, int max = kMaxChunk);

struct Chunk {
  FrameRange range;
  std::vector<FrameImage> frames;
};

struct ChunkAnnotation {
  FrameRange chunk;
  std::vector<EventDescription> events;  // global frame ranges
};

struct PoolEvent {
  FrameRange range;
  std::string text;
  int representative = 1;
  bool operator==(const PoolEvent&) const = default;
};
using ReferencePool = std::vector<PoolEvent>;

/// Response did not match the task schema.
struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Retries exhausted.
struct AnnotationFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Side information the synthetic oracle reads; remote backends ignore it.
struct ClipContext {
  const StoryScript* script = nullptr;
};

/// Wire payloads: {"task": "chunk-annotate" | "synthesize", "frames": [base64 PPM], "prompt": text, ...}.
json chunk_request(const Chunk& chunk);
json synthesize_request(const ReferencePool& pool, const std::vector<FrameImage>& representative_frames);

class AnnotatorClient {
 public:
  virtual ~AnnotatorClient() = default;
  /// Must be safe to call from several threads.
  virtual json call(const json& request, const ClipContext& ctx) = 0;
};

/// Answers from the ground-truth script.
class OracleAnnotator : public AnnotatorClient {
 public:
  json call(const json& request, const ClipContext& ctx) override;
};

/// POSTs the request as JSON to an endpoint such as "http://host:8080/annotate".
/// A bearer token is read from ANCHORFORGE_API_KEY when set.
class HttpAnnotator : public AnnotatorClient {
 public:
  explicit HttpAnnotator(std::string url, std::chrono::seconds timeout = std::chrono::seconds(120));
  json call(const json& request, const ClipContext& ctx) override;

 private:
  JsonEndpoint endpoint_;
};

class MockAnnotator : public AnnotatorClient {
 public:
  using Handler = std::function<json(const json& request, const ClipContext& ctx)>;
  explicit MockAnnotator(Handler h) : handler_(std::move(h)) {}
  json call(const json& request, const ClipContext& ctx) override { return handler_(request, ctx); }

 private:
  Handler handler_;
};

/// Validated responses stored as <dir>/<sha256 of request>.json.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir);
  std::optional<json> get(const std::string& key) const;
  void put(const std::string& key, const json& response) const;
  static std::string key_of(const json& request);

 private:
  std::filesystem::path dir_;
};

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds base_delay{200};  // doubles after each failure
};

struct CallCounters {
  std::atomic<long> client_calls{0};
  std::atomic<long> cache_hits{0};
};

/// Client plus cache plus retry loop shared by both tasks.
struct Annotator {
  AnnotatorClient& client;
  const ResponseCache* cache = nullptr;
  RetryPolicy retry;
  CallCounters* counters = nullptr;

  /// Returns parse(response) for the first response that parses. Throws
  /// AnnotationFailure after `retry.attempts` failed tries.
  template <typename R>
  R request(const json& payload, const ClipContext& ctx, const std::function<R(const json&)>& parse) const;
};

/// Local ranges in the response are mapped back to global frame indices.
ChunkAnnotation parse_chunk_response(const json& response, const FrameRange& chunk);
MultiEventCaption parse_synthesize_response(const json& response, const ReferencePool& pool);

ChunkAnnotation annotate_chunk(const Annotator& annotator, const Chunk& chunk, const ClipContext& ctx = {});

/// Concatenates events in order and merges boundary duplicates with identical text.
ReferencePool build_reference_pool(const std::vector<ChunkAnnotation>& annotations);

MultiEventCaption synthesize_caption(const Annotator& annotator, const ReferencePool& pool,
                                     const std::vector<FrameImage>& frames, const ClipContext& ctx = {});

json to_json(const ChunkAnnotation& a);
json to_json(const ReferencePool& pool);

struct PipelineOptions {
  std::optional<std::filesystem::path> cache_dir;
  int max_in_flight = 4;
  RetryPolicy retry;
};

struct PipelineStats {
  int succeeded = 0;
  int failed = 0;
  int cached = 0;  // clips answered without any client call
  long client_calls = 0;
  long cache_hits = 0;
};

/// One JSONL record per manifest line: {"clip", "status", "chunks", "annotations", "pool", "caption" | "error"}.
/// Manifest lines are {"clip": latent path, "script": optional script path}.
PipelineStats run_pipeline(const std::filesystem::path& manifest, AnnotatorClient& client,
                           const std::filesystem::path& output, const PipelineOptions& opts = {});

json to_json(const PipelineStats& s);

}  // namespace anchorforge::label

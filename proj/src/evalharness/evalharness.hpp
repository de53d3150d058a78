#pragma once

#include <array>
#include <chrono>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "common/http_json.hpp"
#include "latentio/latent.hpp"
#include "storyworld/script.hpp"

namespace anchorforge::eval {

using latent::FrameImage;
using nlohmann::json;
using story::StoryScript;

enum class Metric { NQ, SC, PFA, ShotD, SceneD };
constexpr std::array<Metric, 5> kMetrics{Metric::NQ, Metric::SC, Metric::PFA, Metric::ShotD, Metric::SceneD};
const char* name_of(Metric m);

struct MetricRubric {
  Metric metric;
  std::string title;
  std::array<std::string, 5> bands;  // 0-1 points up to 4-5 points
};

const std::vector<MetricRubric>& standard_rubrics();

struct DialogueTurn {
  std::string role;  // "user" or "assistant"
  std::string text;
  std::vector<FrameImage> images;
};

/// user(set 1), assistant ack, user(set 2), assistant ack, user(criteria).
std::vector<DialogueTurn> build_dialogue(const std::vector<FrameImage>& first, const std::vector<FrameImage>& second,
                                         const std::vector<MetricRubric>& rubrics = standard_rubrics());

/// Scores indexed by Metric; a = first set shown, b = second.
struct RoundScores {
  std::array<int, 5> a{};
  std::array<int, 5> b{};
  bool operator==(const RoundScores&) const = default;
};

struct ScoreParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Reads "NQ: A=4 B=3" lines (one per metric, any order, other text ignored).
RoundScores parse_score_block(const std::string& text);
std::string format_score_block(const RoundScores& s);

enum class Decision { Win, Tie, Loss };
const char* name_of(Decision d);

/// Both rounds are expressed with a = model A. A round is won on strictly higher score.
Decision decide(const RoundScores& forward, const RoundScores& reverse, Metric m);

struct PairwiseResult {
  RoundScores forward;
  RoundScores reverse;  // already mapped back so a = model A
  std::array<Decision, 5> decisions{};
};

struct JudgeContext {
  const StoryScript* script = nullptr;  // for the oracle judge
};

class JudgeClient {
 public:
  virtual ~JudgeClient() = default;
  /// Assistant text for the final user turn.
  virtual std::string respond(const std::vector<DialogueTurn>& dialogue, const JudgeContext& ctx) = 0;
};

/// Scores both image sets with the storyworld oracle.
class OracleJudge : public JudgeClient {
 public:
  std::string respond(const std::vector<DialogueTurn>& dialogue, const JudgeContext& ctx) override;
};

/// POSTs {"messages": [{"role", "content", "images": [base64 PPM]}]} and expects {"text": ...}.
/// A bearer token is read from ANCHORFORGE_API_KEY when set.
class HttpJudge : public JudgeClient {
 public:
  explicit HttpJudge(std::string url, std::chrono::seconds timeout = std::chrono::seconds(300));
  std::string respond(const std::vector<DialogueTurn>& dialogue, const JudgeContext& ctx) override;

 private:
  JsonEndpoint endpoint_;
};

class MockJudge : public JudgeClient {
 public:
  using Handler = std::function<std::string(const std::vector<DialogueTurn>&, const JudgeContext&)>;
  explicit MockJudge(Handler h) : handler_(std::move(h)) {}
  std::string respond(const std::vector<DialogueTurn>& d, const JudgeContext& c) override { return handler_(d, c); }

 private:
  Handler handler_;
};

struct JudgeFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Forward (A first) then reverse (B first). An unparsable reply gets one re-ask.
PairwiseResult judge_pair(JudgeClient& client, const std::vector<FrameImage>& frames_a,
                          const std::vector<FrameImage>& frames_b, const JudgeContext& ctx = {});

/// Oracle measurements binned to 1..5 for each set.
RoundScores oracle_judge(const std::vector<FrameImage>& frames_a, const std::vector<FrameImage>& frames_b,
                         const StoryScript& script);

struct WinTieLossTable {
  std::array<std::array<int, 3>, 5> counts{};  // [metric][win, tie, loss]
  std::array<int, 3> totals() const;
  int stories() const;
  std::string render_text() const;
  std::string render_csv() const;
};

WinTieLossTable aggregate(const std::vector<PairwiseResult>& results);
WinTieLossTable aggregate(const std::vector<std::array<Decision, 5>>& decisions);

json to_json(const PairwiseResult& r);

}  // namespace anchorforge::eval

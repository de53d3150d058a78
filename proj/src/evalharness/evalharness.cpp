#include "evalharness/evalharness.hpp"

#include <iomanip>
#include <regex>
#include <sstream>

#include "common/digest.hpp"
#include "storyworld/oracle.hpp"

namespace anchorforge::eval {

const char* name_of(Metric m) {
  switch (m) {
    case Metric::NQ: return "NQ";
    case Metric::SC: return "SC";
    case Metric::PFA: return "PFA";
    case Metric::ShotD: return "ShotD";
    case Metric::SceneD: return "SceneD";
  }
  return "?";
}

const char* name_of(Decision d) {
  switch (d) {
    case Decision::Win: return "win";
    case Decision::Tie: return "tie";
    case Decision::Loss: return "loss";
  }
  return "?";
}

const std::vector<MetricRubric>& standard_rubrics() {
  static const std::vector<MetricRubric> rubrics{
      {Metric::NQ,
       "Narrative Quality",
       {"The frames have no continuity; no plot can be followed and there is no narrative logic.",
        "The frames are loosely linked, but subjects behave the same in every frame, so the story is hard to follow.",
        "The basic course of the story comes through, though transitions and story beats are weak and related "
        "elements are shown in much the same way.",
        "The frames connect well and show the main plot clearly, with varied ways of presenting how the story "
        "develops.",
        "The frames form a fully coherent narrative that catches every key moment and emotional turn with a "
        "film-like rhythm."}},
      {Metric::SC,
       "Subject Consistency",
       {"The subject changes completely between frames (appearance, clothing, features) and cannot be taken for "
        "the same subject.",
        "The subject is still recognizable, but clear inconsistencies in its features break continuity.",
        "The subject is basically consistent; small changes do not hurt recognition and key features mostly hold.",
        "The subject stays consistent in every frame; the few changes in features, clothing or appearance are "
        "small and fit the plot.",
        "The subject is fully consistent in every frame, with uniform, natural details, expressions and changes at "
        "a professional standard."}},
      {Metric::PFA,
       "Prompt-Frame Alignment",
       {"The frames barely relate to the prompt and ignore its core elements and scene descriptions.",
        "The frames relate to the prompt in places, showing a few described elements while most key information "
        "is missing.",
        "The frames broadly follow the prompt and show its main elements, but some details or emotional cues "
        "drift from it.",
        "The frames match the prompt closely, showing the described scene, characters and emotions, with small "
        "differences only in minor details.",
        "The frames render the prompt completely, covering every explicit description and also the implied "
        "atmosphere, style and emotion."}},
      {Metric::ShotD,
       "Shot Diversity",
       {"Every frame uses the same shot type and angle; composition is monotonous with no change of perspective.",
        "Few shot types, mostly two or three basic angles, with little variation or creativity.",
        "Some variety of shots (close-up, medium, wide and so on), but little innovation.",
        "Many shot types and angles with clear changes in composition that support the story and its emotions.",
        "Shot language at a professional film level: varied types, angles and compositions, inventive, and every "
        "shot serves the story and its emotions."}},
      {Metric::SceneD,
       "Scene Diversity",
       {"Every frame stays in one scene; the environment repeats and nothing changes in space or time.",
        "Few scene changes, mostly within one or two scenes, with small environmental changes and no clear "
        "passage of time.",
        "Several different scenes with basic environmental change, but transitions feel abrupt or variety is "
        "limited.",
        "Varied scenes with natural transitions across different environments, a clear passage of time and good "
        "use of space.",
        "A very wide range of environments, strong variation in time and space, and transitions that fit the "
        "story exactly."}},
  };
  return rubrics;
}

std::vector<DialogueTurn> build_dialogue(const std::vector<FrameImage>& first, const std::vector<FrameImage>& second,
                                         const std::vector<MetricRubric>& rubrics) {
  if (first.empty() || second.empty()) throw std::invalid_argument("build_dialogue: empty frame set");
  std::string criteria =
      "Evaluation criteria. Rate the first set (A) and the second set (B) on each metric from 1 to 5.\n";
  for (const auto& r : rubrics) {
    criteria += "\n" + r.title + " (" + name_of(r.metric) + "):\n";
    for (int b = 0; b < 5; ++b)
      criteria += std::to_string(b) + "-" + std::to_string(b + 1) + (b ? " points: " : " point: ") + r.bands[b] + "\n";
  }
  criteria += "\nEnd your answer with exactly one line per metric in this form:\n";
  for (const auto& r : rubrics) criteria += std::string(name_of(r.metric)) + ": A=<1-5> B=<1-5>\n";
  return {
      {"user", "I provide the first set of story frames extracted from a long video.", first},
      {"assistant", "I have received the first set of story frames.", {}},
      {"user", "I provide the second set of story frames from the same video.", second},
      {"assistant", "I have received the second set of story frames.", {}},
      {"user", criteria, {}},
  };
}

RoundScores parse_score_block(const std::string& text) {
  static const std::regex line_re(R"(^\s*\**\s*(NQ|SC|PFA|ShotD|SceneD)\s*\**\s*:\s*A\s*=\s*([1-5])\s*,?\s*B\s*=\s*([1-5])\s*$)",
                                  std::regex::icase);
  RoundScores s;
  std::array<bool, 5> seen{};
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::smatch m;
    if (!std::regex_match(line, m, line_re)) continue;
    for (Metric metric : kMetrics) {
      std::string want = name_of(metric), got = m[1];
      if (want.size() != got.size() ||
          !std::equal(want.begin(), want.end(), got.begin(), [](char x, char y) { return std::tolower(x) == std::tolower(y); }))
        continue;
      const auto i = static_cast<std::size_t>(metric);
      if (seen[i]) throw ScoreParseError(want + " scored twice");
      seen[i] = true;
      s.a[i] = std::stoi(m[2]);
      s.b[i] = std::stoi(m[3]);
    }
  }
  for (Metric metric : kMetrics)
    if (!seen[static_cast<std::size_t>(metric)])
      throw ScoreParseError(std::string("no score line for ") + name_of(metric));
  return s;
}

std::string format_score_block(const RoundScores& s) {
  std::string out;
  for (Metric m : kMetrics) {
    const auto i = static_cast<std::size_t>(m);
    out += std::string(name_of(m)) + ": A=" + std::to_string(s.a[i]) + " B=" + std::to_string(s.b[i]) + "\n";
  }
  return out;
}

Decision decide(const RoundScores& forward, const RoundScores& reverse, Metric m) {
  const auto i = static_cast<std::size_t>(m);
  const int a_wins = (forward.a[i] > forward.b[i]) + (reverse.a[i] > reverse.b[i]);
  const int b_wins = (forward.b[i] > forward.a[i]) + (reverse.b[i] > reverse.a[i]);
  if (a_wins == 2) return Decision::Win;
  if (b_wins == 2) return Decision::Loss;
  return Decision::Tie;
}

RoundScores oracle_judge(const std::vector<FrameImage>& frames_a, const std::vector<FrameImage>& frames_b,
                         const StoryScript& script) {
  auto bins = [&](const std::vector<FrameImage>& f) {
    const auto o = story::oracle_metrics(f, script);
    std::array<int, 5> out{};
    out[static_cast<std::size_t>(Metric::NQ)] = story::bin_score(o.nq);
    out[static_cast<std::size_t>(Metric::SC)] = story::bin_score(o.sc);
    out[static_cast<std::size_t>(Metric::PFA)] = story::bin_score(o.pfa);
    out[static_cast<std::size_t>(Metric::ShotD)] = story::bin_score(o.shot_d);
    out[static_cast<std::size_t>(Metric::SceneD)] = story::bin_score(o.scene_d);
    return out;
  };
  return {bins(frames_a), bins(frames_b)};
}

std::string OracleJudge::respond(const std::vector<DialogueTurn>& dialogue, const JudgeContext& ctx) {
  if (!ctx.script) throw std::runtime_error("oracle judge needs the story script");
  const std::vector<FrameImage>* sets[2] = {nullptr, nullptr};
  int k = 0;
  for (const auto& t : dialogue)
    if (t.role == "user" && !t.images.empty() && k < 2) sets[k++] = &t.images;
  if (k != 2) throw std::runtime_error("oracle judge expects two image sets");
  return "Scores:\n" + format_score_block(oracle_judge(*sets[0], *sets[1], *ctx.script));
}

HttpJudge::HttpJudge(std::string url, std::chrono::seconds timeout) : endpoint_(std::move(url), timeout) {}

std::string HttpJudge::respond(const std::vector<DialogueTurn>& dialogue, const JudgeContext&) {
  json messages = json::array();
  for (const auto& t : dialogue) {
    json images = json::array();
    for (const auto& im : t.images) images.push_back(base64_encode(latent::encode_ppm(im)));
    messages.push_back({{"role", t.role}, {"content", t.text}, {"images", images}});
  }
  const auto r = endpoint_.post({{"messages", messages}});
  if (!r.is_object() || !r.contains("text") || !r["text"].is_string())
    throw std::runtime_error("judge response needs a \"text\" string");
  return r["text"].get<std::string>();
}

namespace {

RoundScores ask(JudgeClient& client, std::vector<DialogueTurn> dialogue, const JudgeContext& ctx) {
  const std::string reply = client.respond(dialogue, ctx);
  try {
    return parse_score_block(reply);
  } catch (const ScoreParseError& first) {
    dialogue.push_back({"assistant", reply, {}});
    std::string reminder = "Your answer could not be read (" + std::string(first.what()) +
                           "). Reply with only these five lines, each score an integer from 1 to 5:\n";
    for (Metric m : kMetrics) reminder += std::string(name_of(m)) + ": A=<score> B=<score>\n";
    dialogue.push_back({"user", reminder, {}});
    try {
      return parse_score_block(client.respond(dialogue, ctx));
    } catch (const ScoreParseError& second) {
      throw JudgeFailure(std::string("unparsable score block after re-ask: ") + second.what());
    }
  }
}

}  // namespace

PairwiseResult judge_pair(JudgeClient& client, const std::vector<FrameImage>& frames_a,
                          const std::vector<FrameImage>& frames_b, const JudgeContext& ctx) {
  PairwiseResult r;
  r.forward = ask(client, build_dialogue(frames_a, frames_b), ctx);
  const auto rev = ask(client, build_dialogue(frames_b, frames_a), ctx);
  r.reverse = {rev.b, rev.a};
  for (Metric m : kMetrics) r.decisions[static_cast<std::size_t>(m)] = decide(r.forward, r.reverse, m);
  return r;
}

std::array<int, 3> WinTieLossTable::totals() const {
  std::array<int, 3> t{};
  for (const auto& row : counts)
    for (int k = 0; k < 3; ++k) t[k] += row[k];
  return t;
}

int WinTieLossTable::stories() const { return counts[0][0] + counts[0][1] + counts[0][2]; }

std::string WinTieLossTable::render_text() const {
  std::ostringstream os;
  os << std::left << std::setw(8) << "Metric";
  for (Metric m : kMetrics) os << std::right << std::setw(8) << name_of(m);
  os << std::setw(8) << "Total" << "\n";
  const auto t = totals();
  const char* rows[3] = {"Win", "Tie", "Loss"};
  for (int k = 0; k < 3; ++k) {
    os << std::left << std::setw(8) << rows[k];
    for (const auto& row : counts) os << std::right << std::setw(8) << row[k];
    os << std::setw(8) << t[k] << "\n";
  }
  return os.str();
}

std::string WinTieLossTable::render_csv() const {
  std::string out = "result";
  for (Metric m : kMetrics) out += std::string(",") + name_of(m);
  out += ",Total\n";
  const auto t = totals();
  const char* rows[3] = {"win", "tie", "loss"};
  for (int k = 0; k < 3; ++k) {
    out += rows[k];
    for (const auto& row : counts) out += "," + std::to_string(row[k]);
    out += "," + std::to_string(t[k]) + "\n";
  }
  return out;
}

WinTieLossTable aggregate(const std::vector<std::array<Decision, 5>>& decisions) {
  WinTieLossTable t;
  for (const auto& d : decisions)
    for (std::size_t i = 0; i < 5; ++i) ++t.counts[i][static_cast<int>(d[i])];
  return t;
}

WinTieLossTable aggregate(const std::vector<PairwiseResult>& results) {
  std::vector<std::array<Decision, 5>> d;
  for (const auto& r : results) d.push_back(r.decisions);
  return aggregate(d);
}

json to_json(const PairwiseResult& r) {
  json j{{"forward", json::object()}, {"reverse", json::object()}, {"decision", json::object()}};
  for (Metric m : kMetrics) {
    const auto i = static_cast<std::size_t>(m);
    j["forward"][name_of(m)] = {{"a", r.forward.a[i]}, {"b", r.forward.b[i]}};
    j["reverse"][name_of(m)] = {{"a", r.reverse.a[i]}, {"b", r.reverse.b[i]}};
    j["decision"][name_of(m)] = name_of(r.decisions[i]);
  }
  return j;
}

}  // namespace anchorforge::eval

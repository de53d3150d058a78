#include "storyworld/caption.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace anchorforge::story {

Vocab::Vocab() {
  words_ = {"<pad>", "<null>", "<bos>", "<eos>", "[", "]", "-", ":", ".", ",",
            "events", "subjects", "style", "the", "story", "then", "in", "scene", "and"};
  for (int i = 0; i < 100; ++i) words_.push_back(std::to_string(i));
  for (int c = 0; c < kPaletteSize; ++c) words_.emplace_back(name_of(static_cast<Color>(c)));
  for (int s = 0; s < 3; ++s) words_.emplace_back(name_of(static_cast<ShapeKind>(s)));
  for (const char* w : {"plain", "striped", "dotted", "enters", "enter", "moves", "move", "meets", "meet",
                        "exits", "exit", "left", "right", "up", "down"}) {
    words_.emplace_back(w);
  }
  for (int s = 0; s < 3; ++s) words_.emplace_back(name_of(static_cast<Style>(s)));
}

const Vocab& Vocab::standard() {
  static const Vocab v;
  return v;
}

int Vocab::id(std::string_view word) const {
  const auto it = std::find(words_.begin(), words_.end(), word);
  if (it == words_.end()) throw std::invalid_argument("word '" + std::string(word) + "' is not in the vocabulary");
  return static_cast<int>(it - words_.begin());
}

const std::string& Vocab::word(int id) const {
  if (id < 0 || id >= size()) throw std::invalid_argument("token id " + std::to_string(id) + " out of range");
  return words_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocab::tokenize(std::string_view text) const {
  std::vector<int> ids;
  std::istringstream is{std::string(text)};
  for (std::string w; is >> w;) ids.push_back(id(w));
  return ids;
}

std::string Vocab::detokenize(const std::vector<int>& ids) const {
  std::string out;
  for (int id : ids) {
    if (!out.empty()) out += ' ';
    out += word(id);
  }
  return out;
}

namespace {

std::string_view texture_adjective(Texture t) {
  switch (t) {
    case Texture::Flat: return "plain";
    case Texture::Stripes: return "striped";
    case Texture::Dots: return "dotted";
  }
  return "plain";
}

std::string verb_phrase(Action a, bool plural) {
  switch (a) {
    case Action::Enter: return plural ? "enter" : "enters";
    case Action::Exit: return plural ? "exit" : "exits";
    case Action::Meet: return plural ? "meet" : "meets";
    case Action::MoveLeft: return plural ? "move left" : "moves left";
    case Action::MoveRight: return plural ? "move right" : "moves right";
    case Action::MoveUp: return plural ? "move up" : "moves up";
    case Action::MoveDown: return plural ? "move down" : "moves down";
  }
  return "";
}

}  // namespace

std::string subject_phrase(const Subject& subject) {
  return std::string(name_of(subject.color)) + " " + std::string(name_of(subject.shape));
}

std::string event_clause(const StoryScript& script, const Event& event) {
  std::string out;
  for (std::size_t i = 0; i < event.subject_ids.size(); ++i) {
    if (i) out += " and ";
    out += subject_phrase(script.subject(event.subject_ids[i]));
  }
  const Scene& sc = script.scene(event.scene_id);
  out += " " + verb_phrase(event.action, event.subject_ids.size() > 1);
  out += " in the " + std::string(name_of(sc.background)) + " " + std::string(texture_adjective(sc.texture)) + " scene";
  return out;
}

std::vector<int> frames_on_screen(const StoryScript& script) {
  const Track track = subject_track(script);
  std::vector<int> counts(script.subjects.size(), 0);
  for (const auto& frame : track)
    for (std::size_t k = 0; k < frame.size(); ++k) counts[k] += frame[k].visible;
  return counts;
}

std::string caption_global_text(const StoryScript& script) {
  std::string out = "the story :";
  for (std::size_t i = 0; i < script.events.size(); ++i) {
    out += i ? " , then " : " ";
    out += event_clause(script, script.events[i]);
  }
  out += " . style : " + std::string(name_of(script.style)) + " .";
  return out;
}

std::vector<int> caption_global(const StoryScript& script) {
  return Vocab::standard().tokenize(caption_global_text(script));
}

MultiEventCaption caption_multi_event(const StoryScript& script) {
  MultiEventCaption cap;
  for (const auto& e : script.events) cap.consistency_event_description.push_back({e.frame_range, event_clause(script, e)});
  const auto counts = frames_on_screen(script);
  std::vector<std::size_t> order(script.subjects.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (counts[a] != counts[b]) return counts[a] > counts[b];
    return script.subjects[a].id < script.subjects[b].id;
  });
  for (auto k : order) cap.subjects.push_back(subject_phrase(script.subjects[k]));
  cap.video_style = std::string(name_of(script.style));
  return cap;
}

std::string serialize_caption(const MultiEventCaption& caption) {
  std::string out = "events :";
  for (const auto& e : caption.consistency_event_description) {
    out += " [ " + std::to_string(e.range.start) + " - " + std::to_string(e.range.end) + " ] " + e.text + " .";
  }
  out += " subjects :";
  for (std::size_t i = 0; i < caption.subjects.size(); ++i) out += (i ? " , " : " ") + caption.subjects[i];
  out += " . style : " + caption.video_style + " .";
  return out;
}

std::vector<int> tokenize_caption(const MultiEventCaption& caption) {
  return Vocab::standard().tokenize(serialize_caption(caption));
}

nlohmann::json to_json(const MultiEventCaption& caption) {
  nlohmann::json events = nlohmann::json::array();
  for (const auto& e : caption.consistency_event_description) {
    events.push_back({{"range", {e.range.start, e.range.end}}, {"text", e.text}});
  }
  return {{"consistency_event_description", events}, {"subjects", caption.subjects}, {"video_style", caption.video_style}};
}

MultiEventCaption caption_from_json(const nlohmann::json& j) {
  MultiEventCaption cap;
  try {
    for (const auto& e : j.at("consistency_event_description")) {
      const auto r = e.at("range").get<std::vector<int>>();
      if (r.size() != 2) throw std::invalid_argument("range must have two entries");
      cap.consistency_event_description.push_back({{r[0], r[1]}, e.at("text").get<std::string>()});
    }
    cap.subjects = j.at("subjects").get<std::vector<std::string>>();
    cap.video_style = j.at("video_style").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("malformed caption JSON: ") + e.what());
  }
  return cap;
}

}  // namespace anchorforge::story

#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "storyworld/script.hpp"

namespace anchorforge::story {

/// Closed word vocabulary shared by captions and the model's text table.
class Vocab {
 public:
  static const Vocab& standard();

  int size() const { return static_cast<int>(words_.size()); }
  int id(std::string_view word) const;  // throws on unknown words
  const std::string& word(int id) const;

  /// Whitespace-separated words to ids.
  std::vector<int> tokenize(std::string_view text) const;
  std::string detokenize(const std::vector<int>& ids) const;

  static constexpr int kPad = 0;
  static constexpr int kNull = 1;

 private:
  Vocab();
  std::vector<std::string> words_;
};

struct EventDescription {
  FrameRange range;
  std::string text;
  bool operator==(const EventDescription&) const = default;
};

struct MultiEventCaption {
  std::vector<EventDescription> consistency_event_description;
  std::vector<std::string> subjects;  // ranked, most frames on screen first
  std::string video_style;
  bool operator==(const MultiEventCaption&) const = default;
};

/// "red square and blue circle meet in the green striped scene"
std::string event_clause(const StoryScript& script, const Event& event);
std::string subject_phrase(const Subject& subject);

/// Frames on screen per subject, indexed like script.subjects.
std::vector<int> frames_on_screen(const StoryScript& script);

/// Unsegmented caption text: "the story : c1 , then c2 . style : pop ."
std::string caption_global_text(const StoryScript& script);
std::vector<int> caption_global(const StoryScript& script);

MultiEventCaption caption_multi_event(const StoryScript& script);

/// "events : [ 1 - 3 ] c1 . [ 4 - 8 ] c2 . subjects : red square . style : pop ."
std::string serialize_caption(const MultiEventCaption& caption);
std::vector<int> tokenize_caption(const MultiEventCaption& caption);

nlohmann::json to_json(const MultiEventCaption& caption);
MultiEventCaption caption_from_json(const nlohmann::json& j);

}  // namespace anchorforge::story

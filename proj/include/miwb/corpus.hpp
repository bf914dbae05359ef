#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

namespace miwb::corpus {

enum class Speaker { Client, Counselor };

// Dominant script of a dialogue. Drives word counting and metric tokenization.
enum class Language { Cjk, Latin, Mixed };

std::string_view to_string(Speaker s);
std::string_view to_string(Language l);
std::optional<Language> parse_language(std::string_view s);

struct Turn {
  Speaker speaker{Speaker::Client};
  std::string text;

  bool operator==(const Turn&) const = default;
};

struct Dialogue {
  std::string id;
  std::string source;
  Language language{Language::Cjk};
  std::optional<std::string> topic;
  // Leading counselor text that precedes the first client turn. Kept for
  // coding, never paired into a round.
  std::optional<std::string> preamble;
  std::vector<Turn> turns;

  // Number of adjacent (Client, Counselor) pairs.
  std::size_t round_count() const;
  bool has_trailing_client() const;

  bool operator==(const Dialogue&) const = default;
};

// Throws Error(MalformedRecord) if turns do not alternate starting with the
// client, or any turn text is blank.
void validate(const Dialogue& d);

enum class InputFormat { NativeJson, TurnListJson, PlainTranscript };
std::optional<InputFormat> parse_input_format(std::string_view s);

// One normalization step applied while parsing.
struct NormalizationAction {
  std::size_t record_index{0};
  std::string dialogue_id;
  std::string action;
  std::string detail;
};

struct ParseResult {
  std::vector<Dialogue> dialogues;
  std::vector<NormalizationAction> actions;
};

struct ParseOptions {
  // Used for records that do not name their source.
  std::string source = "unknown";
};

ParseResult parse_corpus(const std::filesystem::path& path, InputFormat format,
                         const ParseOptions& options = {});
ParseResult parse_corpus_text(std::string_view content, InputFormat format,
                              const ParseOptions& options = {});

// Native format: top-level array of {id, source, language, topic?, preamble?, turns}.
nlohmann::ordered_json to_json(const Dialogue& d);
nlohmann::ordered_json to_json(const std::vector<Dialogue>& ds);
std::string serialize_native(const std::vector<Dialogue>& ds);
void write_native(const std::filesystem::path& path, const std::vector<Dialogue>& ds);
std::vector<Dialogue> load_native(const std::filesystem::path& path);

// One JSON object per line.
std::string report_jsonl(const std::vector<NormalizationAction>& actions);

Language detect_language(const std::vector<Turn>& turns);

// Word count under the workbench's segmentation rule:
//  - Cjk/Mixed: every CJK codepoint is one word; every maximal run of other
//    letters/digits is one word; punctuation and symbols count zero.
//  - Latin: every whitespace-delimited token holding at least one letter,
//    digit or CJK codepoint is one word ("don't" is one word).
std::size_t count_words(std::string_view text, Language language);

struct CorpusStats {
  std::size_t n_dialogues{0};
  double avg_rounds{0.0};
  double avg_client_words{0.0};
  double avg_counselor_words{0.0};
};

enum class UtteranceAveraging {
  Pooled,  // all utterances of the corpus in one mean
  Macro,   // per-dialogue utterance means, then mean over dialogues
};

// Preamble text is not an utterance of any round and is left out.
CorpusStats corpus_stats(const std::vector<Dialogue>& dialogues,
                         UtteranceAveraging averaging = UtteranceAveraging::Pooled);

nlohmann::ordered_json to_json(const CorpusStats& s);

// Splits "Label: text" on an ASCII or fullwidth colon when the label is a
// known client/counselor alias (e.g. "Counselor", "咨询师").
std::optional<std::pair<Speaker, std::string>> parse_labelled_line(std::string_view line);

// Dialogue text as speaker-labelled lines, e.g. "Client: ...".
std::string render_labelled(const Dialogue& d);

}  // namespace miwb::corpus

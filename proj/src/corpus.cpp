#include "miwb/corpus.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "miwb/error.hpp"
#include "miwb/io.hpp"
#include "miwb/text.hpp"

namespace miwb::corpus {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

std::string_view to_string(Speaker s) { return s == Speaker::Client ? "client" : "counselor"; }

std::string_view to_string(Language l) {
  switch (l) {
    case Language::Cjk:
      return "cjk";
    case Language::Latin:
      return "latin";
    case Language::Mixed:
      return "mixed";
  }
  return "mixed";
}

std::optional<Language> parse_language(std::string_view s) {
  if (s == "cjk") return Language::Cjk;
  if (s == "latin") return Language::Latin;
  if (s == "mixed") return Language::Mixed;
  return std::nullopt;
}

std::optional<InputFormat> parse_input_format(std::string_view s) {
  if (s == "native-json") return InputFormat::NativeJson;
  if (s == "turn-list-json") return InputFormat::TurnListJson;
  if (s == "plain-transcript") return InputFormat::PlainTranscript;
  return std::nullopt;
}

std::size_t Dialogue::round_count() const {
  std::size_t rounds = 0;
  std::size_t i = 0;
  while (i + 1 < turns.size()) {
    if (turns[i].speaker == Speaker::Client && turns[i + 1].speaker == Speaker::Counselor) {
      ++rounds;
      i += 2;
    } else {
      ++i;
    }
  }
  return rounds;
}

bool Dialogue::has_trailing_client() const {
  return !turns.empty() && turns.back().speaker == Speaker::Client;
}

void validate(const Dialogue& d) {
  for (std::size_t i = 0; i < d.turns.size(); ++i) {
    const Speaker expected = i % 2 == 0 ? Speaker::Client : Speaker::Counselor;
    if (d.turns[i].speaker != expected) {
      throw Error(Errc::MalformedRecord, "dialogue '" + d.id + "': turn " + std::to_string(i) +
                                             " breaks client/counselor alternation");
    }
    if (text::trim(d.turns[i].text).empty()) {
      throw Error(Errc::MalformedRecord,
                  "dialogue '" + d.id + "': turn " + std::to_string(i) + " has empty text");
    }
  }
}

namespace {

// A record as read from any input format, before normalization.
struct RawRecord {
  std::size_t index{0};
  std::optional<std::string> id;
  std::optional<std::string> source;
  std::optional<Language> language;
  std::optional<std::string> topic;
  std::optional<std::string> preamble;
  std::vector<Turn> turns;
  std::vector<NormalizationAction> pre_actions;
};

[[noreturn]] void malformed(std::size_t index, const std::string& what) {
  throw Error(Errc::MalformedRecord, "record " + std::to_string(index) + ": " + what);
}

std::string lower_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

// Speaker aliases found across public counseling corpora.
std::optional<Speaker> speaker_alias(std::string_view raw) {
  static const std::set<std::string> kClient = {
      "client", "user", "human", "visitor", "patient", "seeker", "来访者", "求助者", "用户"};
  static const std::set<std::string> kCounselor = {
      "counselor", "counsellor", "assistant", "therapist", "gpt", "bot",
      "supporter", "咨询师", "心理咨询师", "助手"};
  const std::string key = lower_ascii(text::trim(raw));
  if (kClient.contains(key)) return Speaker::Client;
  if (kCounselor.contains(key)) return Speaker::Counselor;
  return std::nullopt;
}

bool is_system_role(std::string_view raw) { return lower_ascii(text::trim(raw)) == "system"; }

const json* find_any(const json& obj, std::initializer_list<const char*> keys) {
  for (const char* k : keys) {
    auto it = obj.find(k);
    if (it != obj.end()) return &*it;
  }
  return nullptr;
}

json parse_json_document(std::string_view content) {
  try {
    return json::parse(content);
  } catch (const json::parse_error& e) {
    throw Error(Errc::MalformedRecord, std::string("invalid JSON: ") + e.what());
  }
}

std::vector<RawRecord> read_native(std::string_view content) {
  const json doc = parse_json_document(content);
  if (!doc.is_array()) throw Error(Errc::MalformedRecord, "native corpus must be a JSON array");
  std::vector<RawRecord> out;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const json& rec = doc[i];
    if (!rec.is_object()) malformed(i, "not an object");
    RawRecord r;
    r.index = i;
    auto id = rec.find("id");
    if (id == rec.end() || !id->is_string()) malformed(i, "missing string field 'id'");
    r.id = id->get<std::string>();
    if (auto s = rec.find("source"); s != rec.end()) {
      if (!s->is_string()) malformed(i, "'source' must be a string");
      r.source = s->get<std::string>();
    }
    if (auto l = rec.find("language"); l != rec.end()) {
      if (!l->is_string() || !parse_language(l->get<std::string>())) {
        malformed(i, "'language' must be one of cjk, latin, mixed");
      }
      r.language = parse_language(l->get<std::string>());
    }
    if (auto t = rec.find("topic"); t != rec.end() && !t->is_null()) {
      if (!t->is_string()) malformed(i, "'topic' must be a string");
      r.topic = t->get<std::string>();
    }
    if (auto p = rec.find("preamble"); p != rec.end() && !p->is_null()) {
      if (!p->is_string()) malformed(i, "'preamble' must be a string");
      r.preamble = p->get<std::string>();
    }
    auto turns = rec.find("turns");
    if (turns == rec.end() || !turns->is_array()) malformed(i, "missing array field 'turns'");
    for (std::size_t k = 0; k < turns->size(); ++k) {
      const json& t = (*turns)[k];
      if (!t.is_object()) malformed(i, "turn " + std::to_string(k) + " is not an object");
      auto sp = t.find("speaker");
      if (sp == t.end() || !sp->is_string()) {
        malformed(i, "turn " + std::to_string(k) + " missing field 'speaker'");
      }
      const std::string speaker = sp->get<std::string>();
      if (speaker != "client" && speaker != "counselor") {
        malformed(i, "turn " + std::to_string(k) + " has unknown speaker '" + speaker + "'");
      }
      auto tx = t.find("text");
      if (tx == t.end() || !tx->is_string()) {
        malformed(i, "turn " + std::to_string(k) + " missing field 'text'");
      }
      r.turns.push_back(
          {speaker == "client" ? Speaker::Client : Speaker::Counselor, tx->get<std::string>()});
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<RawRecord> read_turn_list(std::string_view content) {
  const json doc = parse_json_document(content);
  if (!doc.is_array()) throw Error(Errc::MalformedRecord, "turn-list corpus must be a JSON array");
  std::vector<RawRecord> out;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const json& rec = doc[i];
    RawRecord r;
    r.index = i;
    const json* messages = nullptr;
    if (rec.is_array()) {
      messages = &rec;
    } else if (rec.is_object()) {
      messages = find_any(rec, {"turns", "messages", "conversation", "conversations", "dialogue"});
      if (const json* id = find_any(rec, {"id", "dialogue_id"})) {
        if (id->is_string()) r.id = id->get<std::string>();
        if (id->is_number_integer()) r.id = std::to_string(id->get<long long>());
      }
      if (const json* topic = find_any(rec, {"topic", "theme"}); topic && topic->is_string()) {
        r.topic = topic->get<std::string>();
      }
      if (const json* src = find_any(rec, {"source"}); src && src->is_string()) {
        r.source = src->get<std::string>();
      }
    }
    if (messages == nullptr || !messages->is_array()) malformed(i, "no message list found");
    for (std::size_t k = 0; k < messages->size(); ++k) {
      const json& m = (*messages)[k];
      if (!m.is_object()) malformed(i, "message " + std::to_string(k) + " is not an object");
      const json* sp = find_any(m, {"speaker", "role", "from"});
      if (sp == nullptr || !sp->is_string()) {
        malformed(i, "message " + std::to_string(k) + " missing field 'speaker'");
      }
      const json* tx = find_any(m, {"text", "content", "value"});
      if (tx == nullptr || !tx->is_string()) {
        malformed(i, "message " + std::to_string(k) + " missing field 'text'");
      }
      const std::string raw = sp->get<std::string>();
      if (is_system_role(raw)) {
        r.pre_actions.push_back({i, "", "dropped_system_message", "message " + std::to_string(k)});
        continue;
      }
      const auto speaker = speaker_alias(raw);
      if (!speaker) malformed(i, "message " + std::to_string(k) + " has unknown speaker '" + raw + "'");
      r.turns.push_back({*speaker, tx->get<std::string>()});
    }
    out.push_back(std::move(r));
  }
  return out;
}

// Splits "Label: text" (ASCII or fullwidth colon). Returns nullopt for lines
// without a recognised label.
std::optional<std::pair<Speaker, std::string>> split_labelled_line(std::string_view line) {
  static constexpr std::string_view kFullwidthColon = "\xEF\xBC\x9A";
  std::size_t pos = line.find(':');
  std::size_t sep_len = 1;
  const std::size_t fw = line.find(kFullwidthColon);
  if (fw != std::string_view::npos && (pos == std::string_view::npos || fw < pos)) {
    pos = fw;
    sep_len = kFullwidthColon.size();
  }
  if (pos == std::string_view::npos || pos == 0 || pos > 48) return std::nullopt;
  const auto speaker = speaker_alias(line.substr(0, pos));
  if (!speaker) return std::nullopt;
  return std::make_pair(*speaker, std::string(line.substr(pos + sep_len)));
}

// Plain transcript layout:
//   # id: <id>            optional header lines
//   # topic: <topic>
//   Client: ...
//   Counselor: ...
//   <continuation lines are appended to the previous turn>
//   ---                   separates dialogues
std::vector<RawRecord> read_plain(std::string_view content) {
  std::vector<RawRecord> out;
  RawRecord cur;
  bool has_content = false;
  auto flush = [&] {
    if (has_content) {
      cur.index = out.size();
      out.push_back(std::move(cur));
    }
    cur = RawRecord{};
    has_content = false;
  };
  std::istringstream in{std::string(content)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string trimmed = text::trim(line);
    if (trimmed == "---") {
      flush();
      continue;
    }
    if (trimmed.empty()) continue;
    if (trimmed.rfind("#", 0) == 0) {
      const std::string body = text::trim(std::string_view(trimmed).substr(1));
      const auto colon = body.find(':');
      if (colon != std::string::npos) {
        const std::string key = lower_ascii(text::trim(body.substr(0, colon)));
        const std::string value = text::trim(body.substr(colon + 1));
        if (key == "id") cur.id = value;
        if (key == "topic") cur.topic = value;
        if (key == "source") cur.source = value;
        if (key == "language") cur.language = parse_language(value);
      }
      has_content = true;
      continue;
    }
    if (auto labelled = split_labelled_line(trimmed)) {
      cur.turns.push_back({labelled->first, labelled->second});
      has_content = true;
      continue;
    }
    if (cur.turns.empty()) {
      throw Error(Errc::MalformedRecord, "record " + std::to_string(out.size()) + ": line " +
                                             std::to_string(line_no) +
                                             " has no speaker label");
    }
    cur.turns.back().text += "\n" + trimmed;
  }
  flush();
  return out;
}

Dialogue normalize(RawRecord&& r, const ParseOptions& options,
                   std::vector<NormalizationAction>& actions) {
  Dialogue d;
  d.id = r.id.value_or(options.source + "-" + std::to_string(r.index));
  d.source = r.source.value_or(options.source);
  d.topic = r.topic;
  auto log = [&](std::string action, std::string detail) {
    actions.push_back({r.index, d.id, std::move(action), std::move(detail)});
  };
  for (auto& a : r.pre_actions) {
    a.dialogue_id = d.id;
    actions.push_back(std::move(a));
  }
  if (!r.id) log("assigned_id", d.id);

  std::vector<Turn> kept;
  for (std::size_t k = 0; k < r.turns.size(); ++k) {
    std::string t = text::trim(r.turns[k].text);
    if (t.empty()) {
      log("dropped_empty_turn", "turn " + std::to_string(k));
      continue;
    }
    if (!kept.empty() && kept.back().speaker == r.turns[k].speaker) {
      kept.back().text += "\n" + t;
      log("merged_turns", std::string(to_string(r.turns[k].speaker)) + " turn " +
                              std::to_string(k) + " merged into previous");
      continue;
    }
    kept.push_back({r.turns[k].speaker, std::move(t)});
  }

  if (r.preamble) {
    const std::string p = text::trim(*r.preamble);
    if (!p.empty()) d.preamble = p;
  }
  if (!kept.empty() && kept.front().speaker == Speaker::Counselor) {
    d.preamble = d.preamble ? *d.preamble + "\n" + kept.front().text : kept.front().text;
    kept.erase(kept.begin());
    log("counselor_preamble", "leading counselor turn kept as preamble, excluded from rounds");
  }
  d.turns = std::move(kept);
  if (d.has_trailing_client()) {
    log("trailing_client_turn", "final client turn has no counselor reply");
  }
  if (r.language) {
    d.language = *r.language;
  } else {
    d.language = detect_language(d.turns);
    log("language_detected", std::string(to_string(d.language)));
  }
  return d;
}

}  // namespace

std::optional<std::pair<Speaker, std::string>> parse_labelled_line(std::string_view line) {
  return split_labelled_line(line);
}

Language detect_language(const std::vector<Turn>& turns) {
  std::string all;
  for (const auto& t : turns) {
    all += t.text;
    all += '\n';
  }
  const double share = text::cjk_share(all);
  if (share >= 0.7) return Language::Cjk;
  if (share <= 0.3) return Language::Latin;
  return Language::Mixed;
}

ParseResult parse_corpus_text(std::string_view content, InputFormat format,
                              const ParseOptions& options) {
  if (!text::is_valid_utf8(content)) {
    throw Error(Errc::MalformedRecord, "corpus is not valid UTF-8");
  }
  std::vector<RawRecord> raw;
  switch (format) {
    case InputFormat::NativeJson:
      raw = read_native(content);
      break;
    case InputFormat::TurnListJson:
      raw = read_turn_list(content);
      break;
    case InputFormat::PlainTranscript:
      raw = read_plain(content);
      break;
  }
  ParseResult result;
  std::set<std::string> seen;
  for (auto& r : raw) {
    const std::size_t index = r.index;
    Dialogue d = normalize(std::move(r), options, result.actions);
    if (d.turns.empty()) {
      result.actions.push_back({index, d.id, "dropped_empty_dialogue", "no turns after normalization"});
      continue;
    }
    if (!seen.insert(d.id).second) malformed(index, "duplicate dialogue id '" + d.id + "'");
    result.dialogues.push_back(std::move(d));
  }
  if (result.dialogues.empty()) throw Error(Errc::EmptyCorpus, "corpus contains no dialogues");
  return result;
}

ParseResult parse_corpus(const std::filesystem::path& path, InputFormat format,
                         const ParseOptions& options) {
  return parse_corpus_text(io::read_file(path), format, options);
}

ojson to_json(const Dialogue& d) {
  ojson j;
  j["id"] = d.id;
  j["source"] = d.source;
  j["language"] = to_string(d.language);
  if (d.topic) j["topic"] = *d.topic;
  if (d.preamble) j["preamble"] = *d.preamble;
  j["turns"] = ojson::array();
  for (const auto& t : d.turns) {
    ojson tj;
    tj["speaker"] = to_string(t.speaker);
    tj["text"] = t.text;
    j["turns"].push_back(std::move(tj));
  }
  return j;
}

ojson to_json(const std::vector<Dialogue>& ds) {
  ojson arr = ojson::array();
  for (const auto& d : ds) arr.push_back(to_json(d));
  return arr;
}

std::string serialize_native(const std::vector<Dialogue>& ds) { return to_json(ds).dump(2) + "\n"; }

void write_native(const std::filesystem::path& path, const std::vector<Dialogue>& ds) {
  io::write_file_atomic(path, serialize_native(ds));
}

std::vector<Dialogue> load_native(const std::filesystem::path& path) {
  auto parsed = parse_corpus(path, InputFormat::NativeJson);
  for (const auto& d : parsed.dialogues) validate(d);
  return std::move(parsed.dialogues);
}

std::string report_jsonl(const std::vector<NormalizationAction>& actions) {
  std::string out;
  for (const auto& a : actions) {
    ojson j;
    j["record_index"] = a.record_index;
    j["dialogue_id"] = a.dialogue_id;
    j["action"] = a.action;
    j["detail"] = a.detail;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::size_t count_words(std::string_view s, Language language) {
  std::size_t count = 0;
  if (language == Language::Latin) {
    bool in_token = false;
    bool token_counts = false;
    for (char32_t cp : text::decode_utf8(s)) {
      if (text::is_space(cp)) {
        if (in_token && token_counts) ++count;
        in_token = false;
        token_counts = false;
        continue;
      }
      in_token = true;
      if (text::is_word_char(cp) || text::is_cjk(cp)) token_counts = true;
    }
    if (in_token && token_counts) ++count;
    return count;
  }
  bool in_run = false;
  for (char32_t cp : text::decode_utf8(s)) {
    if (text::is_cjk(cp)) {
      ++count;
      in_run = false;
    } else if (text::is_word_char(cp)) {
      if (!in_run) ++count;
      in_run = true;
    } else {
      in_run = false;
    }
  }
  return count;
}

CorpusStats corpus_stats(const std::vector<Dialogue>& dialogues, UtteranceAveraging averaging) {
  if (dialogues.empty()) throw Error(Errc::EmptyCorpus, "corpus_stats needs at least one dialogue");
  CorpusStats s;
  s.n_dialogues = dialogues.size();

  double rounds = 0.0;
  double words[2] = {0.0, 0.0};      // pooled word sums, client then counselor
  double utterances[2] = {0.0, 0.0};  // pooled utterance counts
  double macro_sum[2] = {0.0, 0.0};
  double macro_n[2] = {0.0, 0.0};
  for (const auto& d : dialogues) {
    rounds += static_cast<double>(d.round_count());
    double dw[2] = {0.0, 0.0};
    double du[2] = {0.0, 0.0};
    for (const auto& t : d.turns) {
      const int k = t.speaker == Speaker::Client ? 0 : 1;
      dw[k] += static_cast<double>(count_words(t.text, d.language));
      du[k] += 1.0;
    }
    for (int k = 0; k < 2; ++k) {
      words[k] += dw[k];
      utterances[k] += du[k];
      if (du[k] > 0) {
        macro_sum[k] += dw[k] / du[k];
        macro_n[k] += 1.0;
      }
    }
  }
  s.avg_rounds = rounds / static_cast<double>(dialogues.size());
  double avg[2];
  for (int k = 0; k < 2; ++k) {
    if (averaging == UtteranceAveraging::Pooled) {
      avg[k] = utterances[k] > 0 ? words[k] / utterances[k] : 0.0;
    } else {
      avg[k] = macro_n[k] > 0 ? macro_sum[k] / macro_n[k] : 0.0;
    }
  }
  s.avg_client_words = avg[0];
  s.avg_counselor_words = avg[1];
  return s;
}

ojson to_json(const CorpusStats& s) {
  ojson j;
  j["n_dialogues"] = s.n_dialogues;
  j["avg_rounds"] = s.avg_rounds;
  j["avg_client_words"] = s.avg_client_words;
  j["avg_counselor_words"] = s.avg_counselor_words;
  return j;
}

std::string render_labelled(const Dialogue& d) {
  std::string out;
  if (d.preamble) out += "Counselor: " + *d.preamble + "\n";
  for (const auto& t : d.turns) {
    out += t.speaker == Speaker::Client ? "Client: " : "Counselor: ";
    out += t.text;
    out += '\n';
  }
  return out;
}

}  // namespace miwb::corpus

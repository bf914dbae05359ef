#include "miwb/transcribe.hpp"

#include <algorithm>
#include <cmath>

#include "miwb/error.hpp"
#include "miwb/io.hpp"
#include "miwb/random.hpp"
#include "miwb/text.hpp"

namespace miwb::transcribe {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;
using corpus::Speaker;

const std::vector<std::string>& section_keys() {
  static const std::vector<std::string> keys = {
      "Role",           "TaskObjective",     "FourCoreTasks",         "KeyTechniques",
      "TransformationSteps", "GuidingPrinciples", "OutputFormatExample"};
  return keys;
}

namespace {

std::string_view section_title(const std::string& key) {
  static const std::map<std::string, std::string_view> titles = {
      {"Role", "Role"},
      {"TaskObjective", "Task Objective"},
      {"FourCoreTasks", "Four Core Tasks of Motivational Interviewing"},
      {"KeyTechniques", "Key Techniques of Motivational Interviewing"},
      {"TransformationSteps", "Transformation Steps"},
      {"GuidingPrinciples", "Guiding Principles"},
      {"OutputFormatExample", "Output Format Example"},
  };
  return titles.at(key);
}

std::size_t count_occurrences(std::string_view hay, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string_view::npos;
       pos = hay.find(needle, pos + needle.size())) {
    ++n;
  }
  return n;
}

}  // namespace

TranscriptionTemplate TranscriptionTemplate::reconstructed_default() {
  TranscriptionTemplate t;
  t.sections["Role"] =
      "[Reconstructed default template; replace with your own prompt text.]\n"
      "You are an experienced counselor trained in Motivational Interviewing (MI).";
  t.sections["TaskObjective"] =
      "Rewrite the counseling dialogue below into an MI-style dialogue. Keep the client's "
      "situation, concerns and key facts, and rewrite the counselor so that every reply is "
      "MI-consistent.";
  t.sections["FourCoreTasks"] =
      "1. Engaging: build a trusting, collaborative working relationship.\n"
      "2. Focusing: agree on a clear direction for the conversation.\n"
      "3. Evoking: draw out the client's own reasons and motivation for change.\n"
      "4. Planning: when the client is ready, help shape a concrete change plan.";
  t.sections["KeyTechniques"] =
      "- Open questions that invite the client to elaborate.\n"
      "- Affirmations of the client's strengths and efforts.\n"
      "- Simple and complex reflections of meaning and feeling.\n"
      "- Summaries that collect and link what the client has said.\n"
      "- Cultivating change talk and softening sustain talk.\n"
      "- Asking permission before giving information or advice.\n"
      "- Emphasizing the client's autonomy and choice.";
  t.sections["TransformationSteps"] =
      "1. Read the whole dialogue and identify the client's target behavior and ambivalence.\n"
      "2. Keep the client turns close to the original wording.\n"
      "3. Rewrite each counselor turn using the techniques above.\n"
      "4. Keep roughly the same number of rounds as the original dialogue.";
  t.sections["GuidingPrinciples"] =
      "Do not confront, persuade without permission or lecture the client. Stay warm, "
      "non-judgmental and respectful of the client's pace.";
  t.sections["OutputFormatExample"] =
      "Output only the dialogue, one turn per line, each line starting with its speaker label:\n"
      "Client: ...\n"
      "Counselor: ...\n\n"
      "Original dialogue:\n{{dialogue}}";
  return t;
}

void validate(const TranscriptionTemplate& t) {
  for (const auto& key : section_keys()) {
    auto it = t.sections.find(key);
    if (it == t.sections.end() || text::trim(it->second).empty()) {
      throw Error(Errc::MissingSection, "transcription template lacks section '" + key + "'");
    }
  }
  if (t.dialogue_placeholder.empty()) {
    throw Error(Errc::TemplateInvalid, "dialogue placeholder must not be empty");
  }
  std::size_t n = 0;
  for (const auto& key : section_keys()) {
    n += count_occurrences(t.sections.at(key), t.dialogue_placeholder);
  }
  if (n > 1) {
    throw Error(Errc::TemplateInvalid, "dialogue placeholder '" + t.dialogue_placeholder +
                                           "' appears " + std::to_string(n) +
                                           " times; at most once is allowed");
  }
}

TranscriptionTemplate template_from_json(const json& j) {
  if (!j.is_object()) throw Error(Errc::TemplateInvalid, "template must be a JSON object");
  const json& body = j.contains("sections") ? j.at("sections") : j;
  TranscriptionTemplate t;
  try {
    for (const auto& key : section_keys()) {
      if (body.contains(key)) t.sections[key] = body.at(key).get<std::string>();
    }
    if (j.contains("dialogue_placeholder")) {
      t.dialogue_placeholder = j.at("dialogue_placeholder").get<std::string>();
    }
  } catch (const json::exception& e) {
    throw Error(Errc::TemplateInvalid, std::string("template: ") + e.what());
  }
  validate(t);
  return t;
}

TranscriptionTemplate load_template(const std::filesystem::path& path) {
  try {
    return template_from_json(json::parse(io::read_file(path)));
  } catch (const json::parse_error& e) {
    throw Error(Errc::TemplateInvalid, "template '" + path.string() + "': " + e.what());
  }
}

ojson to_json(const TranscriptionTemplate& t) {
  ojson j;
  j["dialogue_placeholder"] = t.dialogue_placeholder;
  ojson sections = ojson::object();
  for (const auto& key : section_keys()) {
    if (auto it = t.sections.find(key); it != t.sections.end()) sections[key] = it->second;
  }
  j["sections"] = sections;
  return j;
}

std::string render_prompt(const TranscriptionTemplate& t, const corpus::Dialogue& dialogue) {
  validate(t);
  std::string dialogue_text = corpus::render_labelled(dialogue);
  while (!dialogue_text.empty() && dialogue_text.back() == '\n') dialogue_text.pop_back();

  std::string out;
  bool placed = false;
  for (const auto& key : section_keys()) {
    std::string body = t.sections.at(key);
    if (auto pos = body.find(t.dialogue_placeholder); pos != std::string::npos) {
      body.replace(pos, t.dialogue_placeholder.size(), dialogue_text);
      placed = true;
    }
    if (!out.empty()) out += "\n\n";
    out += "## ";
    out += section_title(key);
    out += '\n';
    out += body;
  }
  if (!placed) {
    out += "\n\n## Source Dialogue\n";
    out += dialogue_text;
  }
  out += '\n';
  return out;
}

ojson to_json(const TranscriptionResult& r) {
  ojson j;
  j["source_id"] = r.source_id;
  j["validation"] = {{"round_count_ok", r.validation.round_count_ok},
                     {"alternation_ok", r.validation.alternation_ok},
                     {"parse_ok", r.validation.parse_ok}};
  j["transcribed"] = corpus::to_json(r.transcribed);
  j["raw_reply"] = r.raw_reply;
  if (!r.error.empty()) j["error"] = r.error;
  return j;
}

TranscriptionResult parse_reply(const corpus::Dialogue& source, std::string_view reply,
                                const TranscribeOptions& options) {
  TranscriptionResult result;
  result.source_id = source.id;
  result.raw_reply = std::string(reply);
  result.transcribed.id = source.id;
  result.transcribed.source = source.source;
  result.transcribed.topic = source.topic;
  result.transcribed.language = source.language;

  std::vector<corpus::Turn> raw;
  std::size_t start = 0;
  while (start <= reply.size()) {
    auto end = reply.find('\n', start);
    if (end == std::string_view::npos) end = reply.size();
    std::string line = text::trim(reply.substr(start, end - start));
    start = end + 1;
    if (line.empty()) continue;
    // Tolerate markdown emphasis around labels, e.g. "**Counselor:** ...".
    std::string unmarked = line;
    unmarked.erase(std::remove(unmarked.begin(), unmarked.end(), '*'), unmarked.end());
    if (auto labelled = corpus::parse_labelled_line(unmarked)) {
      raw.push_back({labelled->first, text::trim(labelled->second)});
    } else if (!raw.empty()) {
      raw.back().text += (raw.back().text.empty() ? "" : "\n") + line;
    }
  }

  bool alternates = true;
  std::vector<corpus::Turn> turns;
  for (auto& t : raw) {
    if (t.text.empty()) continue;
    if (!turns.empty() && turns.back().speaker == t.speaker) {
      turns.back().text += "\n" + t.text;
      alternates = false;
      continue;
    }
    turns.push_back(std::move(t));
  }
  if (!turns.empty() && turns.front().speaker == Speaker::Counselor) {
    result.transcribed.preamble = turns.front().text;
    turns.erase(turns.begin());
  }
  result.transcribed.turns = std::move(turns);
  if (!result.transcribed.turns.empty()) {
    result.transcribed.language = corpus::detect_language(result.transcribed.turns);
  }

  const std::size_t got = result.transcribed.round_count();
  const std::size_t want = source.round_count();
  result.validation.parse_ok = got > 0;
  result.validation.alternation_ok = result.validation.parse_ok && alternates;
  result.validation.round_count_ok =
      result.validation.parse_ok && (got > want ? got - want : want - got) <= options.round_tolerance;
  return result;
}

namespace {

std::vector<gateway::ChatMessage> transcription_messages(const TranscriptionTemplate& t,
                                                         const corpus::Dialogue& d) {
  return {{gateway::Role::User, render_prompt(t, d)}};
}

}  // namespace

TranscriptionResult transcribe_dialogue(const corpus::Dialogue& dialogue,
                                        const TranscriptionTemplate& t, gateway::Client& client,
                                        const TranscribeOptions& options) {
  const auto reply = client.chat(transcription_messages(t, dialogue), "transcribe-" + dialogue.id);
  return parse_reply(dialogue, reply.content, options);
}

std::vector<TranscriptionResult> transcribe_batch(const std::vector<corpus::Dialogue>& dialogues,
                                                  const TranscriptionTemplate& t,
                                                  gateway::Client& client,
                                                  const TranscribeOptions& options) {
  validate(t);
  if (dialogues.empty()) throw Error(Errc::EmptyCorpus, "no dialogues to transcribe");
  std::vector<const corpus::Dialogue*> ordered;
  for (const auto& d : dialogues) ordered.push_back(&d);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const auto* a, const auto* b) { return a->id < b->id; });

  std::vector<std::vector<gateway::ChatMessage>> jobs;
  for (const auto* d : ordered) jobs.push_back(transcription_messages(t, *d));
  const auto replies = client.run_batch(jobs, "transcribe");

  std::vector<TranscriptionResult> results;
  results.reserve(ordered.size());
  for (std::size_t i = 0; i < ordered.size(); ++i) {
    if (replies[i].ok) {
      results.push_back(parse_reply(*ordered[i], replies[i].result.content, options));
    } else {
      TranscriptionResult r;
      r.source_id = ordered[i]->id;
      r.transcribed.id = ordered[i]->id;
      r.transcribed.source = ordered[i]->source;
      r.transcribed.language = ordered[i]->language;
      r.transcribed.topic = ordered[i]->topic;
      r.error = replies[i].error;
      results.push_back(std::move(r));
    }
  }
  return results;
}

std::vector<corpus::Dialogue> accepted(const std::vector<TranscriptionResult>& results) {
  std::vector<corpus::Dialogue> out;
  for (const auto& r : results) {
    if (r.validation.parse_ok) out.push_back(r.transcribed);
  }
  return out;
}

std::string audit_jsonl(const std::vector<TranscriptionResult>& results) {
  std::string out;
  for (const auto& r : results) {
    out += to_json(r).dump();
    out += '\n';
  }
  return out;
}

Split split_train_test(const std::vector<corpus::Dialogue>& dialogues, std::size_t n_test,
                       std::uint64_t seed) {
  if (n_test >= dialogues.size()) {
    throw Error(Errc::SplitTooLarge, "n_test " + std::to_string(n_test) +
                                         " must be smaller than the corpus size " +
                                         std::to_string(dialogues.size()));
  }
  SeededRng rng(seed);
  std::vector<bool> in_test(dialogues.size(), false);
  for (std::size_t i : rng.sample_indices(dialogues.size(), n_test)) in_test[i] = true;
  Split s;
  for (std::size_t i = 0; i < dialogues.size(); ++i) {
    (in_test[i] ? s.test : s.train).push_back(dialogues[i]);
  }
  return s;
}

namespace {

const TrainingConfig& published_defaults() {
  static const TrainingConfig c = [] {
    TrainingConfig d;
    for (const char* k : {"learning_rate", "lr_scheduler", "per_device_train_batch_size",
                          "gradient_accumulation_steps", "num_train_epochs", "warmup_ratio",
                          "precision", "adapter", "logging_steps", "save_steps"}) {
      d.provenance[k] = "default";
    }
    return d;
  }();
  return c;
}

ojson values_json(const TrainingConfig& c) {
  ojson j;
  j["learning_rate"] = c.learning_rate;
  j["lr_scheduler"] = c.lr_scheduler;
  j["per_device_train_batch_size"] = c.per_device_train_batch_size;
  j["gradient_accumulation_steps"] = c.gradient_accumulation_steps;
  j["num_train_epochs"] = c.num_train_epochs;
  j["warmup_ratio"] = c.warmup_ratio;
  j["precision"] = c.precision;
  j["adapter"] = c.adapter;
  j["logging_steps"] = c.logging_steps;
  j["save_steps"] = c.save_steps;
  return j;
}

void apply_values(TrainingConfig& c, const json& j) {
  for (const auto& [key, v] : j.items()) {
    if (key == "learning_rate") c.learning_rate = v.get<double>();
    else if (key == "lr_scheduler") c.lr_scheduler = v.get<std::string>();
    else if (key == "per_device_train_batch_size") c.per_device_train_batch_size = v.get<int>();
    else if (key == "gradient_accumulation_steps") c.gradient_accumulation_steps = v.get<int>();
    else if (key == "num_train_epochs") c.num_train_epochs = v.get<int>();
    else if (key == "warmup_ratio") c.warmup_ratio = v.get<double>();
    else if (key == "precision") c.precision = v.get<std::string>();
    else if (key == "adapter") c.adapter = v.get<std::string>();
    else if (key == "logging_steps") c.logging_steps = v.get<int>();
    else if (key == "save_steps") c.save_steps = v.get<int>();
    else throw Error(Errc::InvalidConfig, "unknown training config key '" + key + "'");
  }
}

void check(const TrainingConfig& c) {
  auto fail = [](const std::string& what) { throw Error(Errc::InvalidConfig, what); };
  if (!(c.learning_rate > 0) || !std::isfinite(c.learning_rate)) fail("learning_rate must be > 0");
  if (c.per_device_train_batch_size < 1) fail("per_device_train_batch_size must be >= 1");
  if (c.gradient_accumulation_steps < 1) fail("gradient_accumulation_steps must be >= 1");
  if (c.num_train_epochs < 1) fail("num_train_epochs must be >= 1");
  if (c.warmup_ratio < 0 || c.warmup_ratio >= 1) fail("warmup_ratio must be in [0, 1)");
  if (c.logging_steps < 1 || c.save_steps < 1) fail("logging_steps and save_steps must be >= 1");
  if (c.lr_scheduler.empty() || c.precision.empty() || c.adapter.empty()) {
    fail("lr_scheduler, precision and adapter must be non-empty");
  }
}

}  // namespace

TrainingConfig emit_training_config(const json& overrides) {
  if (!overrides.is_object()) throw Error(Errc::InvalidConfig, "overrides must be a JSON object");
  TrainingConfig c = published_defaults();
  try {
    apply_values(c, overrides);
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidConfig, std::string("training config: ") + e.what());
  }
  check(c);
  const ojson base = values_json(published_defaults());
  const ojson now = values_json(c);
  for (const auto& [key, v] : now.items()) {
    c.provenance[key] = v == base.at(key) ? "default" : "override";
  }
  return c;
}

ojson to_json(const TrainingConfig& c) {
  ojson j = values_json(c);
  ojson prov = ojson::object();
  for (const auto& [key, v] : j.items()) {
    auto it = c.provenance.find(key);
    prov[key] = it == c.provenance.end() ? "override" : it->second;
  }
  j["provenance"] = prov;
  return j;
}

TrainingConfig training_config_from_json(const json& j) {
  if (!j.is_object()) throw Error(Errc::InvalidConfig, "training config must be a JSON object");
  TrainingConfig c;
  json values = j;
  values.erase("provenance");
  try {
    apply_values(c, values);
    if (j.contains("provenance")) {
      c.provenance = j.at("provenance").get<std::map<std::string, std::string>>();
    }
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidConfig, std::string("training config: ") + e.what());
  }
  check(c);
  return c;
}

}  // namespace miwb::transcribe

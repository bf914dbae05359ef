#include "miwb/screen.hpp"

#include <algorithm>
#include <cstdio>
#include <regex>
#include <set>

#include "miwb/error.hpp"
#include "miwb/io.hpp"
#include "miwb/random.hpp"

namespace miwb::screen {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

constexpr std::string_view kDialogueSlot = "{{dialogue}}";
constexpr std::string_view kAspectsSlot = "{{aspects}}";

const std::vector<std::string>& standard_aspect_names() {
  static const std::vector<std::string> names = {"comprehensiveness", "professionalism",
                                                 "authenticity", "safety"};
  return names;
}

std::size_t count_occurrences(std::string_view hay, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string_view::npos;
       pos = hay.find(needle, pos + needle.size())) {
    ++n;
  }
  return n;
}

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
}

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace

QualityRubric QualityRubric::standard() {
  QualityRubric r;
  // Aspect wording is workbench default text; replace via a rubric file.
  r.aspects = {
      {"comprehensiveness",
       "The dialogue covers the client's situation, concerns and goals thoroughly.", 1, 5},
      {"professionalism",
       "The counselor uses sound counseling techniques and appropriate language.", 1, 5},
      {"authenticity", "The exchange reads like a genuine counseling conversation.", 1, 5},
      {"safety", "The counselor avoids harmful, unethical or risky guidance.", 1, 5},
  };
  r.judge_prompt_template =
      "You are rating the quality of a psychological counseling dialogue.\n"
      "Score each aspect below with a single number inside its scale.\n\n"
      "{{aspects}}\n\n"
      "Dialogue:\n{{dialogue}}\n\n"
      "Reply with exactly one line of the form name=score separated by commas, "
      "listing every aspect above in order, and nothing else.";
  return r;
}

void validate(const QualityRubric& rubric) {
  auto fail = [](const std::string& what) { throw Error(Errc::InvalidRubric, what); };
  std::set<std::string> names;
  for (const auto& a : rubric.aspects) {
    if (a.name.empty()) fail("aspect with empty name");
    if (!names.insert(lower(a.name)).second) fail("duplicate aspect '" + a.name + "'");
    if (a.scale_min >= a.scale_max) fail("aspect '" + a.name + "' needs scale_min < scale_max");
  }
  for (const auto& required : standard_aspect_names()) {
    if (!names.contains(required)) fail("rubric lacks the '" + required + "' aspect");
  }
  if (count_occurrences(rubric.judge_prompt_template, kDialogueSlot) != 1) {
    fail("judge prompt template must contain {{dialogue}} exactly once");
  }
}

QualityRubric rubric_from_json(const json& j) {
  QualityRubric r = QualityRubric::standard();
  try {
    if (j.contains("aspects")) {
      r.aspects.clear();
      for (const auto& a : j.at("aspects")) {
        r.aspects.push_back({a.at("name").get<std::string>(), a.value("description", ""),
                             a.value("scale_min", 1), a.value("scale_max", 5)});
      }
    }
    if (j.contains("judge_prompt_template")) {
      r.judge_prompt_template = j.at("judge_prompt_template").get<std::string>();
    }
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidRubric, std::string("rubric: ") + e.what());
  }
  validate(r);
  return r;
}

QualityRubric load_rubric(const std::filesystem::path& path) {
  try {
    return rubric_from_json(json::parse(io::read_file(path)));
  } catch (const json::parse_error& e) {
    throw Error(Errc::InvalidRubric, "rubric '" + path.string() + "': " + e.what());
  }
}

ojson to_json(const QualityScore& s, const QualityRubric& rubric) {
  ojson j;
  j["dialogue_id"] = s.dialogue_id;
  ojson per = ojson::object();
  for (const auto& a : rubric.aspects) {
    if (auto it = s.per_aspect.find(a.name); it != s.per_aspect.end()) per[a.name] = it->second;
  }
  j["per_aspect"] = per;
  j["total"] = s.total;
  j["mean"] = s.per_aspect.empty() ? 0.0 : s.total / static_cast<double>(s.per_aspect.size());
  j["flags"] = s.flags;
  return j;
}

std::vector<corpus::Dialogue> sample_dialogues(const std::vector<corpus::Dialogue>& corpus,
                                               std::size_t n, std::uint64_t seed) {
  if (n > corpus.size()) {
    throw Error(Errc::SampleTooLarge, "cannot sample " + std::to_string(n) + " from " +
                                          std::to_string(corpus.size()) + " dialogues");
  }
  SeededRng rng(seed);
  std::vector<corpus::Dialogue> out;
  out.reserve(n);
  for (std::size_t i : rng.sample_indices(corpus.size(), n)) out.push_back(corpus[i]);
  return out;
}

std::string render_judge_prompt(const QualityRubric& rubric, const corpus::Dialogue& dialogue) {
  validate(rubric);
  std::string aspects;
  for (const auto& a : rubric.aspects) {
    aspects += "- " + a.name + " (" + std::to_string(a.scale_min) + "-" +
               std::to_string(a.scale_max) + "): " + a.description + "\n";
  }
  if (!aspects.empty()) aspects.pop_back();
  std::string prompt = rubric.judge_prompt_template;
  // Substitute aspects first so dialogue text is never scanned for slots.
  replace_all(prompt, kAspectsSlot, aspects);
  const auto pos = prompt.find(kDialogueSlot);
  prompt.replace(pos, kDialogueSlot.size(), corpus::render_labelled(dialogue));
  return prompt;
}

std::optional<QualityScore> parse_judge_reply(std::string_view reply, const QualityRubric& rubric,
                                              const std::string& dialogue_id) {
  const std::string text(reply);
  std::map<std::string, double> named;
  static const std::regex kPair(R"(([A-Za-z_][A-Za-z_ -]*?)\s*[=:]\s*(-?\d+(?:\.\d+)?))");
  for (auto it = std::sregex_iterator(text.begin(), text.end(), kPair); it != std::sregex_iterator();
       ++it) {
    std::string name = lower((*it)[1].str());
    while (!name.empty() && (name.back() == ' ' || name.back() == '-')) name.pop_back();
    named.emplace(name, std::stod((*it)[2].str()));
  }

  std::vector<double> values;
  bool all_named = true;
  for (const auto& a : rubric.aspects) {
    auto it = named.find(lower(a.name));
    if (it == named.end()) {
      all_named = false;
      break;
    }
    values.push_back(it->second);
  }
  if (!all_named) {
    values.clear();
    static const std::regex kNumber(R"(-?\d+(?:\.\d+)?)");
    for (auto it = std::sregex_iterator(text.begin(), text.end(), kNumber);
         it != std::sregex_iterator() && values.size() < rubric.aspects.size(); ++it) {
      values.push_back(std::stod(it->str()));
    }
    if (values.size() < rubric.aspects.size()) return std::nullopt;
  }

  QualityScore score;
  score.dialogue_id = dialogue_id;
  for (std::size_t i = 0; i < rubric.aspects.size(); ++i) {
    const Aspect& a = rubric.aspects[i];
    double v = values[i];
    const double clamped = std::clamp(v, static_cast<double>(a.scale_min),
                                      static_cast<double>(a.scale_max));
    if (clamped != v) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "clamped %s from %g to %g", a.name.c_str(), v, clamped);
      score.flags.emplace_back(buf);
      v = clamped;
    }
    score.per_aspect[a.name] = v;
    score.total += v;
  }
  if (!all_named) score.flags.emplace_back("parsed by positional fallback");
  return score;
}

namespace {

std::vector<gateway::ChatMessage> judge_messages(const QualityRubric& rubric,
                                                 const corpus::Dialogue& d) {
  return {{gateway::Role::User, render_judge_prompt(rubric, d)}};
}

QualityScore retry_or_fail(const corpus::Dialogue& d, const QualityRubric& rubric,
                           gateway::Client& judge) {
  const auto reply = judge.chat(judge_messages(rubric, d), "judge-retry-" + d.id);
  if (auto s = parse_judge_reply(reply.content, rubric, d.id)) {
    s->flags.emplace_back("parsed on retry");
    return *s;
  }
  throw Error(Errc::JudgeUnparseable, "judge reply for '" + d.id + "' has no scores after retry");
}

}  // namespace

QualityScore score_dialogue(const corpus::Dialogue& dialogue, const QualityRubric& rubric,
                            gateway::Client& judge) {
  validate(rubric);
  const auto reply = judge.chat(judge_messages(rubric, dialogue), "judge-" + dialogue.id);
  if (auto s = parse_judge_reply(reply.content, rubric, dialogue.id)) return *s;
  return retry_or_fail(dialogue, rubric, judge);
}

std::vector<QualityScore> score_dialogues(const std::vector<corpus::Dialogue>& dialogues,
                                          const QualityRubric& rubric, gateway::Client& judge) {
  validate(rubric);
  if (dialogues.empty()) return {};
  std::vector<std::vector<gateway::ChatMessage>> jobs;
  jobs.reserve(dialogues.size());
  for (const auto& d : dialogues) jobs.push_back(judge_messages(rubric, d));
  const auto results = judge.run_batch(jobs, "judge");
  std::vector<QualityScore> scores;
  scores.reserve(dialogues.size());
  for (std::size_t i = 0; i < dialogues.size(); ++i) {
    if (!results[i].ok) {
      throw EndpointError("judge call for '" + dialogues[i].id + "' failed: " + results[i].error,
                          results[i].last_status, results[i].attempts);
    }
    if (auto s = parse_judge_reply(results[i].result.content, rubric, dialogues[i].id)) {
      scores.push_back(std::move(*s));
    } else {
      scores.push_back(retry_or_fail(dialogues[i], rubric, judge));
    }
  }
  return scores;
}

std::vector<DatasetRank> rank_datasets(
    const std::map<std::string, std::vector<QualityScore>>& scores) {
  if (scores.empty()) throw Error(Errc::EmptyScores, "no corpora to rank");
  std::vector<DatasetRank> ranks;
  for (const auto& [name, list] : scores) {
    if (list.empty()) throw Error(Errc::EmptyScores, "corpus '" + name + "' has no scores");
    DatasetRank r;
    r.corpus = name;
    r.n_scored = list.size();
    for (const auto& s : list) {
      r.mean_total += s.total;
      for (const auto& [aspect, v] : s.per_aspect) r.aspect_means[aspect] += v;
    }
    const double n = static_cast<double>(list.size());
    r.mean_total /= n;
    for (auto& [aspect, v] : r.aspect_means) v /= n;
    ranks.push_back(std::move(r));
  }
  std::sort(ranks.begin(), ranks.end(), [](const DatasetRank& a, const DatasetRank& b) {
    if (a.mean_total != b.mean_total) return a.mean_total > b.mean_total;
    return a.corpus < b.corpus;
  });
  return ranks;
}

ojson to_json(const DatasetRank& r) {
  ojson j;
  j["corpus"] = r.corpus;
  j["n_scored"] = r.n_scored;
  j["mean_total"] = r.mean_total;
  ojson means = ojson::object();
  for (const auto& [k, v] : r.aspect_means) means[k] = v;
  j["aspect_means"] = means;
  return j;
}

std::string ranked_table(const std::vector<DatasetRank>& ranks, const QualityRubric& rubric) {
  std::size_t name_w = 6;
  for (const auto& r : ranks) name_w = std::max(name_w, r.corpus.size());
  std::string out;
  char buf[64];
  auto cell = [&](const std::string& s, std::size_t w) {
    out += s;
    if (s.size() < w) out.append(w - s.size(), ' ');
    out += "  ";
  };
  cell("rank", 4);
  cell("corpus", name_w);
  for (const auto& a : rubric.aspects) cell(a.name, std::max<std::size_t>(a.name.size(), 6));
  out += "total\n";
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    cell(std::to_string(i + 1), 4);
    cell(ranks[i].corpus, name_w);
    for (const auto& a : rubric.aspects) {
      auto it = ranks[i].aspect_means.find(a.name);
      std::snprintf(buf, sizeof buf, "%.2f", it == ranks[i].aspect_means.end() ? 0.0 : it->second);
      cell(buf, std::max<std::size_t>(a.name.size(), 6));
    }
    std::snprintf(buf, sizeof buf, "%.2f", ranks[i].mean_total);
    out += buf;
    out += '\n';
  }
  return out;
}

}  // namespace miwb::screen

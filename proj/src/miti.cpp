#include "miwb/miti.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "miwb/error.hpp"
#include "miwb/io.hpp"
#include "miwb/random.hpp"

namespace miwb::miti {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

template <typename G>
auto global_field(G& g, std::string_view name) -> decltype(&g.empathy) {
  if (name == "cultivating_change_talk") return &g.cultivating_change_talk;
  if (name == "softening_sustain_talk") return &g.softening_sustain_talk;
  if (name == "empathy") return &g.empathy;
  if (name == "partnership") return &g.partnership;
  return nullptr;
}

template <typename C>
auto count_field(C& c, std::string_view name) -> decltype(&c.affirming) {
  if (name == "giving_information") return &c.giving_information;
  if (name == "persuading_with_permission") return &c.persuading_with_permission;
  if (name == "asking_questions") return &c.asking_questions;
  if (name == "simple_reflections") return &c.simple_reflections;
  if (name == "complex_reflections") return &c.complex_reflections;
  if (name == "affirming") return &c.affirming;
  if (name == "seeking_collaboration") return &c.seeking_collaboration;
  if (name == "emphasizing_autonomy") return &c.emphasizing_autonomy;
  if (name == "persuading") return &c.persuading;
  if (name == "confronting") return &c.confronting;
  return nullptr;
}

int global_value(const GlobalScores& g, std::string_view name) {
  return *global_field(g, name);
}

int count_value(const BehaviorCounts& c, std::string_view name) {
  return *count_field(c, name);
}

[[noreturn]] void invalid(const std::string& what) { throw Error(Errc::InvalidAnnotation, what); }

std::string fmt2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

ojson ratio_json(const Ratio& r) {
  if (r.value) return *r.value;
  return nullptr;
}

}  // namespace

const std::vector<std::string>& global_names() {
  static const std::vector<std::string> names = {"cultivating_change_talk", "softening_sustain_talk",
                                                 "empathy", "partnership"};
  return names;
}

const std::vector<std::string>& behavior_names() {
  static const std::vector<std::string> names = {
      "giving_information", "persuading_with_permission", "asking_questions",
      "simple_reflections", "complex_reflections",        "affirming",
      "seeking_collaboration", "emphasizing_autonomy",    "persuading",
      "confronting"};
  return names;
}

std::optional<std::string> canonical_behavior(std::string_view name) {
  std::string key(name);
  for (char& c : key) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  static const std::map<std::string, std::string> codes = {
      {"gi", "giving_information"},       {"pwp", "persuading_with_permission"},
      {"q", "asking_questions"},          {"sr", "simple_reflections"},
      {"cr", "complex_reflections"},      {"af", "affirming"},
      {"seek", "seeking_collaboration"},  {"auto", "emphasizing_autonomy"},
      {"persuade", "persuading"},         {"confront", "confronting"}};
  if (auto it = codes.find(key); it != codes.end()) return it->second;
  for (const auto& n : behavior_names()) {
    if (n == key) return n;
  }
  return std::nullopt;
}

BehaviorCounts tally(const std::vector<UtteranceCode>& codes) {
  BehaviorCounts c;
  for (const auto& u : codes) {
    int* f = count_field(c, u.behavior);
    if (!f) invalid("utterance_codes: unknown behavior '" + u.behavior + "'");
    ++*f;
  }
  return c;
}

void validate(const MitiAnnotation& a) {
  if (a.blind_id.empty()) invalid("blind_id must not be empty");
  if (a.coder_id.empty()) invalid("coder_id must not be empty");
  for (const auto& n : global_names()) {
    const int v = global_value(a.globals, n);
    if (v < 1 || v > 5) {
      invalid("globals." + n + " must be an integer in [1, 5], got " + std::to_string(v));
    }
  }
  for (const auto& n : behavior_names()) {
    const int v = count_value(a.counts, n);
    if (v < 0) invalid("counts." + n + " must be >= 0, got " + std::to_string(v));
  }
  if (a.utterance_codes && tally(*a.utterance_codes) != a.counts) {
    invalid("counts must equal the per-behavior tallies of utterance_codes");
  }
}

MitiAnnotation annotation_from_json(const json& j) {
  if (!j.is_object()) invalid("annotation must be a JSON object");
  MitiAnnotation a;
  auto int_field = [](const json& obj, const std::string& where, const std::string& key) -> int {
    if (!obj.contains(key)) invalid(where + "." + key + " is required");
    const json& v = obj.at(key);
    if (!v.is_number_integer()) {
      invalid(where + "." + key + " must be an integer, got " + v.dump());
    }
    const auto x = v.get<long long>();
    if (x < -1000000 || x > 1000000) invalid(where + "." + key + " is out of range");
    return static_cast<int>(x);
  };
  a.blind_id = j.contains("blind_id") && j["blind_id"].is_string() ? j["blind_id"].get<std::string>() : "";
  a.coder_id = j.contains("coder_id") && j["coder_id"].is_string() ? j["coder_id"].get<std::string>() : "";
  if (j.contains("timestamp") && j["timestamp"].is_string()) a.timestamp = j["timestamp"];

  if (!j.contains("globals") || !j["globals"].is_object()) invalid("globals object is required");
  for (const auto& n : global_names()) *global_field(a.globals, n) = int_field(j["globals"], "globals", n);

  if (j.contains("utterance_codes") && !j["utterance_codes"].is_null()) {
    if (!j["utterance_codes"].is_array()) invalid("utterance_codes must be an array");
    std::vector<UtteranceCode> codes;
    for (const auto& u : j["utterance_codes"]) {
      if (!u.is_object()) invalid("utterance_codes entries must be objects");
      UtteranceCode code;
      const int idx = int_field(u, "utterance_codes[]", "turn_index");
      if (idx < 0) invalid("utterance_codes[].turn_index must be >= 0");
      code.turn_index = static_cast<std::size_t>(idx);
      if (!u.contains("behavior") || !u["behavior"].is_string()) {
        invalid("utterance_codes[].behavior is required");
      }
      auto canon = canonical_behavior(u["behavior"].get<std::string>());
      if (!canon) invalid("utterance_codes: unknown behavior '" + u["behavior"].get<std::string>() + "'");
      code.behavior = *canon;
      codes.push_back(std::move(code));
    }
    a.counts = tally(codes);
    if (j.contains("counts") && !j["counts"].is_null()) {
      BehaviorCounts given;
      for (const auto& n : behavior_names()) {
        *count_field(given, n) = j["counts"].is_object() && j["counts"].contains(n)
                                     ? int_field(j["counts"], "counts", n)
                                     : 0;
      }
      if (given != a.counts) invalid("counts must equal the per-behavior tallies of utterance_codes");
    }
    a.utterance_codes = std::move(codes);
  } else {
    if (!j.contains("counts") || !j["counts"].is_object()) {
      invalid("counts object or utterance_codes list is required");
    }
    for (const auto& n : behavior_names()) *count_field(a.counts, n) = int_field(j["counts"], "counts", n);
  }
  return a;
}

ojson to_json(const MitiAnnotation& a) {
  ojson j;
  j["blind_id"] = a.blind_id;
  j["coder_id"] = a.coder_id;
  ojson g;
  for (const auto& n : global_names()) g[n] = global_value(a.globals, n);
  j["globals"] = g;
  ojson c;
  for (const auto& n : behavior_names()) c[n] = count_value(a.counts, n);
  j["counts"] = c;
  if (a.utterance_codes) {
    ojson codes = ojson::array();
    for (const auto& u : *a.utterance_codes) {
      codes.push_back({{"turn_index", u.turn_index}, {"behavior", u.behavior}});
    }
    j["utterance_codes"] = codes;
  }
  j["timestamp"] = a.timestamp;
  return j;
}

double technical_global(double cct, double sst) { return (cct + sst) / 2.0; }
double relational_global(double partnership, double empathy) { return (partnership + empathy) / 2.0; }

Ratio ratio(double numerator, double denominator, std::string_view undefined_reason) {
  Ratio r;
  if (denominator == 0) {
    r.undefined_reason = std::string(undefined_reason);
  } else {
    r.value = numerator / denominator;
  }
  return r;
}

namespace {

constexpr std::string_view kNoReflections = "no reflections (SR + CR = 0)";
constexpr std::string_view kNoQuestions = "no questions (Q = 0)";
constexpr std::string_view kNoAdherence = "no MI-adherent or non-adherent behaviors";

struct RatioParts {
  double cr_num, cr_den, rq_num, rq_den, ad_num, ad_den;
};

RatioParts ratio_parts(const BehaviorCounts& c) {
  const double refl = c.simple_reflections + c.complex_reflections;
  const double adherent = c.seeking_collaboration + c.affirming + c.emphasizing_autonomy;
  return {static_cast<double>(c.complex_reflections),
          refl,
          refl,
          static_cast<double>(c.asking_questions),
          adherent,
          adherent + c.confronting + c.persuading};
}

}  // namespace

MitiSummary summarize(const MitiAnnotation& a) {
  MitiSummary s;
  const auto& c = a.counts;
  const auto p = ratio_parts(c);
  s.total_reflections = c.simple_reflections + c.complex_reflections;
  s.complex_reflection_ratio = ratio(p.cr_num, p.cr_den, kNoReflections);
  s.rq_ratio = ratio(p.rq_num, p.rq_den, kNoQuestions);
  s.technical_global =
      technical_global(a.globals.cultivating_change_talk, a.globals.softening_sustain_talk);
  s.relational_global = relational_global(a.globals.partnership, a.globals.empathy);
  s.adherent_ratio = ratio(p.ad_num, p.ad_den, kNoAdherence);
  return s;
}

ojson to_json(const MitiSummary& s) {
  ojson j;
  j["total_reflections"] = s.total_reflections;
  j["complex_reflection_ratio"] = ratio_json(s.complex_reflection_ratio);
  j["rq_ratio"] = ratio_json(s.rq_ratio);
  j["technical_global"] = s.technical_global;
  j["relational_global"] = s.relational_global;
  j["adherent_ratio"] = ratio_json(s.adherent_ratio);
  ojson undefined = ojson::object();
  auto mark = [&](const char* name, const Ratio& r) {
    if (!r.defined()) undefined[name] = r.undefined_reason;
  };
  mark("complex_reflection_ratio", s.complex_reflection_ratio);
  mark("rq_ratio", s.rq_ratio);
  mark("adherent_ratio", s.adherent_ratio);
  j["undefined"] = undefined;
  return j;
}

const std::vector<std::string>& indicator_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v = global_names();
    v.insert(v.end(), behavior_names().begin(), behavior_names().end());
    for (const char* s : {"total_reflections", "technical_global", "relational_global",
                          "complex_reflection_ratio", "rq_ratio", "adherent_ratio"}) {
      v.emplace_back(s);
    }
    return v;
  }();
  return names;
}

bool is_ratio_indicator(std::string_view name) {
  return name == "complex_reflection_ratio" || name == "rq_ratio" || name == "adherent_ratio";
}

double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw Error(Errc::EmptyInput, "quantile of an empty list");
  std::sort(values.begin(), values.end());
  const double h = static_cast<double>(values.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

namespace {

IndicatorStats describe(const std::vector<double>& values, std::size_t excluded) {
  IndicatorStats s;
  s.n = values.size();
  s.excluded = excluded;
  double sum = 0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  s.q1 = quantile(values, 0.25);
  s.q3 = quantile(values, 0.75);
  return s;
}

ojson stats_json(const IndicatorStats& s) {
  return {{"mean", s.mean}, {"q1", s.q1}, {"q3", s.q3}, {"n", s.n}, {"excluded", s.excluded}};
}

}  // namespace

GroupReport aggregate_group(const std::string& label, const std::vector<MitiAnnotation>& annotations,
                            RatioMode mode) {
  if (annotations.empty()) throw Error(Errc::EmptyGroup, "group '" + label + "' has no annotations");
  GroupReport r;
  r.label = label;
  r.ratio_mode = mode;
  r.n_annotations = annotations.size();

  std::map<std::string, std::vector<double>> values;
  std::map<std::string, std::size_t> excluded;
  BehaviorCounts summed;
  for (const auto& a : annotations) {
    validate(a);
    const MitiSummary s = summarize(a);
    for (const auto& n : global_names()) values[n].push_back(global_value(a.globals, n));
    for (const auto& n : behavior_names()) {
      values[n].push_back(count_value(a.counts, n));
      *count_field(summed, n) += count_value(a.counts, n);
    }
    values["total_reflections"].push_back(s.total_reflections);
    values["technical_global"].push_back(s.technical_global);
    values["relational_global"].push_back(s.relational_global);
    auto push_ratio = [&](const char* name, const Ratio& ratio) {
      values[name];  // keep the key even when every value is undefined
      if (ratio.defined()) {
        values[name].push_back(*ratio.value);
      } else {
        ++excluded[name];
      }
    };
    push_ratio("complex_reflection_ratio", s.complex_reflection_ratio);
    push_ratio("rq_ratio", s.rq_ratio);
    push_ratio("adherent_ratio", s.adherent_ratio);
  }

  const auto p = ratio_parts(summed);
  r.pooled_ratios["complex_reflection_ratio"] = ratio(p.cr_num, p.cr_den, kNoReflections);
  r.pooled_ratios["rq_ratio"] = ratio(p.rq_num, p.rq_den, kNoQuestions);
  r.pooled_ratios["adherent_ratio"] = ratio(p.ad_num, p.ad_den, kNoAdherence);

  for (const auto& name : indicator_names()) {
    const auto& v = values[name];
    if (!is_ratio_indicator(name)) {
      r.indicators[name] = describe(v, 0);
      continue;
    }
    if (v.empty()) continue;  // nothing defined: absent in both modes
    IndicatorStats macro = describe(v, excluded[name]);
    r.macro_ratios[name] = macro;
    IndicatorStats primary = macro;
    if (mode == RatioMode::Pooled) {
      primary.mean = *r.pooled_ratios[name].value;  // defined: some per-annotation ratio is
    }
    r.indicators[name] = primary;
  }
  return r;
}

ojson to_json(const GroupReport& r) {
  ojson j;
  j["label"] = r.label;
  j["ratio_mode"] = r.ratio_mode == RatioMode::Macro ? "macro" : "pooled";
  j["quartile_method"] = "linear interpolation at h = (n - 1) p";
  j["n_annotations"] = r.n_annotations;
  ojson ind = ojson::object();
  for (const auto& name : indicator_names()) {
    auto it = r.indicators.find(name);
    ind[name] = it == r.indicators.end() ? ojson(nullptr) : stats_json(it->second);
  }
  j["indicators"] = ind;
  ojson macro = ojson::object();
  ojson pooled = ojson::object();
  for (const auto& name : indicator_names()) {
    if (!is_ratio_indicator(name)) continue;
    auto m = r.macro_ratios.find(name);
    macro[name] = m == r.macro_ratios.end() ? ojson(nullptr) : stats_json(m->second);
    auto p = r.pooled_ratios.find(name);
    pooled[name] = p == r.pooled_ratios.end() ? ojson(nullptr) : ratio_json(p->second);
  }
  j["ratios_macro"] = macro;
  j["ratios_pooled"] = pooled;
  return j;
}

ComparisonTable compare_groups(const std::vector<GroupReport>& reports) {
  if (reports.size() < 2) {
    throw Error(Errc::EmptyInput, "comparison needs at least two groups, got " +
                                      std::to_string(reports.size()));
  }
  ComparisonTable t;
  for (const auto& r : reports) t.groups.push_back(r.label);
  t.indicators = indicator_names();
  for (const auto& name : t.indicators) {
    std::vector<std::optional<std::string>> row;
    for (const auto& r : reports) {
      auto it = r.indicators.find(name);
      if (it == r.indicators.end()) {
        row.emplace_back(std::nullopt);
      } else {
        row.emplace_back(fmt2(it->second.mean) + "(" + fmt2(it->second.q1) + "," +
                         fmt2(it->second.q3) + ")");
      }
    }
    t.cells.push_back(std::move(row));
  }
  return t;
}

ojson to_json(const ComparisonTable& t) {
  ojson j;
  j["groups"] = t.groups;
  ojson rows = ojson::array();
  for (std::size_t i = 0; i < t.indicators.size(); ++i) {
    ojson row;
    row["indicator"] = t.indicators[i];
    ojson cells = ojson::object();
    for (std::size_t g = 0; g < t.groups.size(); ++g) {
      cells[t.groups[g]] = t.cells[i][g] ? ojson(*t.cells[i][g]) : ojson(nullptr);
    }
    row["cells"] = cells;
    rows.push_back(std::move(row));
  }
  j["rows"] = rows;
  return j;
}

std::string to_text(const ComparisonTable& t) {
  std::size_t first_w = 9;
  for (const auto& n : t.indicators) first_w = std::max(first_w, n.size());
  std::vector<std::size_t> widths;
  for (std::size_t g = 0; g < t.groups.size(); ++g) {
    std::size_t w = t.groups[g].size();
    for (const auto& row : t.cells) {
      w = std::max(w, row[g] ? row[g]->size() : kAbsentMarker.size());
    }
    widths.push_back(w);
  }
  std::string out;
  auto pad = [&](std::string_view s, std::size_t w) {
    out += s;
    if (s.size() < w) out.append(w - s.size(), ' ');
  };
  pad("indicator", first_w);
  for (std::size_t g = 0; g < t.groups.size(); ++g) {
    out += "  ";
    pad(t.groups[g], widths[g]);
  }
  out += '\n';
  for (std::size_t i = 0; i < t.indicators.size(); ++i) {
    pad(t.indicators[i], first_w);
    for (std::size_t g = 0; g < t.groups.size(); ++g) {
      out += "  ";
      pad(t.cells[i][g] ? std::string_view(*t.cells[i][g]) : kAbsentMarker, widths[g]);
    }
    out += '\n';
  }
  // Trailing spaces from padding the last column are noise in diffs.
  std::string trimmed;
  std::size_t start = 0;
  while (start < out.size()) {
    auto end = out.find('\n', start);
    std::string line = out.substr(start, end - start);
    while (!line.empty() && line.back() == ' ') line.pop_back();
    trimmed += line + "\n";
    start = end + 1;
  }
  return trimmed;
}

ojson to_json(const BlindEntry& e) {
  ojson j;
  j["blind_id"] = e.blind_id;
  ojson turns = ojson::array();
  for (const auto& t : e.turns) {
    turns.push_back({{"speaker", corpus::to_string(t.speaker)}, {"text", t.text}});
  }
  j["turns"] = turns;
  return j;
}

BlindEntry blind_entry_from_json(const json& j) {
  BlindEntry e;
  try {
    e.blind_id = j.at("blind_id").get<std::string>();
    for (const auto& t : j.at("turns")) {
      const auto speaker = t.at("speaker").get<std::string>();
      if (speaker != "client" && speaker != "counselor") {
        throw Error(Errc::MalformedRecord, "blind entry speaker must be client or counselor");
      }
      e.turns.push_back({speaker == "client" ? corpus::Speaker::Client : corpus::Speaker::Counselor,
                         t.at("text").get<std::string>()});
    }
  } catch (const json::exception& ex) {
    throw Error(Errc::MalformedRecord, std::string("blind entry: ") + ex.what());
  }
  return e;
}

std::vector<corpus::Turn> coding_turns(const corpus::Dialogue& d) {
  std::vector<corpus::Turn> turns;
  if (d.preamble) turns.push_back({corpus::Speaker::Counselor, *d.preamble});
  turns.insert(turns.end(), d.turns.begin(), d.turns.end());
  return turns;
}

BlindQueue build_blind_queue(const std::vector<LabelledDialogue>& dialogues, std::uint64_t seed) {
  if (dialogues.empty()) throw Error(Errc::EmptyInput, "no dialogues to blind");
  SeededRng rng(seed);
  std::vector<std::size_t> order(dialogues.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  BlindQueue q;
  for (std::size_t i : order) {
    std::string id;
    do {
      id = rng.hex_token(8);
    } while (q.sealed.contains(id));
    q.sealed[id] = {dialogues[i].group, dialogues[i].dialogue.id};
    q.queue.push_back({id, coding_turns(dialogues[i].dialogue)});
  }
  return q;
}

std::string queue_json(const std::vector<BlindEntry>& queue) {
  ojson arr = ojson::array();
  for (const auto& e : queue) arr.push_back(to_json(e));
  return arr.dump(2) + "\n";
}

std::vector<BlindEntry> parse_queue_json(std::string_view content) {
  std::vector<BlindEntry> out;
  try {
    const json arr = json::parse(content);
    if (!arr.is_array()) throw Error(Errc::MalformedRecord, "queue file must be a JSON array");
    for (const auto& e : arr) out.push_back(blind_entry_from_json(e));
  } catch (const json::parse_error& e) {
    throw Error(Errc::MalformedRecord, std::string("queue file: ") + e.what());
  }
  return out;
}

ojson to_json(const SealedMap& sealed) {
  ojson j = ojson::object();
  for (const auto& [id, e] : sealed) j[id] = {{"group", e.group}, {"dialogue_id", e.dialogue_id}};
  return j;
}

void write_sealed(const std::filesystem::path& path, const SealedMap& sealed) {
  io::write_file_atomic(path, to_json(sealed).dump(2) + "\n", 0600);
}

SealedMap load_sealed(const std::filesystem::path& path) {
  SealedMap m;
  try {
    const json j = json::parse(io::read_file(path));
    for (const auto& [id, e] : j.items()) {
      m[id] = {e.at("group").get<std::string>(), e.at("dialogue_id").get<std::string>()};
    }
  } catch (const json::exception& e) {
    throw Error(Errc::MalformedRecord, "sealed map '" + path.string() + "': " + e.what());
  }
  return m;
}

std::vector<GroupReport> unblind_and_aggregate(const std::vector<MitiAnnotation>& annotations,
                                               const SealedMap& sealed, RatioMode mode) {
  std::map<std::string, std::vector<MitiAnnotation>> by_group;
  for (const auto& a : annotations) {
    auto it = sealed.find(a.blind_id);
    if (it == sealed.end()) invalid("annotation for unknown blind_id '" + a.blind_id + "'");
    by_group[it->second.group].push_back(a);
  }
  std::vector<GroupReport> reports;
  for (const auto& [group, list] : by_group) reports.push_back(aggregate_group(group, list, mode));
  return reports;
}

}  // namespace miwb::miti

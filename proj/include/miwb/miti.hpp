#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "miwb/corpus.hpp"

namespace miwb::miti {

struct GlobalScores {
  int cultivating_change_talk{0};
  int softening_sustain_talk{0};
  int empathy{0};
  int partnership{0};

  bool operator==(const GlobalScores&) const = default;
};

struct BehaviorCounts {
  int giving_information{0};
  int persuading_with_permission{0};
  int asking_questions{0};
  int simple_reflections{0};
  int complex_reflections{0};
  int affirming{0};
  int seeking_collaboration{0};
  int emphasizing_autonomy{0};
  int persuading{0};
  int confronting{0};

  bool operator==(const BehaviorCounts&) const = default;
};

const std::vector<std::string>& global_names();
const std::vector<std::string>& behavior_names();

// Accepts a behavior field name or its usual short code (GI, PWP, Q, SR, CR,
// AF, SEEK, AUTO, PERSUADE, CONFRONT; case-insensitive).
std::optional<std::string> canonical_behavior(std::string_view name);

struct UtteranceCode {
  std::size_t turn_index{0};
  std::string behavior;  // canonical field name

  bool operator==(const UtteranceCode&) const = default;
};

struct MitiAnnotation {
  std::string blind_id;
  std::string coder_id;
  GlobalScores globals;
  BehaviorCounts counts;
  std::optional<std::vector<UtteranceCode>> utterance_codes;
  std::string timestamp;

  bool operator==(const MitiAnnotation&) const = default;
};

BehaviorCounts tally(const std::vector<UtteranceCode>& codes);

// Throws Error(InvalidAnnotation) naming the violated invariant, e.g.
// "globals.partnership must be an integer in [1, 5], got 6".
void validate(const MitiAnnotation& a);

// Strict parse. When utterance_codes are given, counts are derived from them
// and any explicit counts must agree. Throws Error(InvalidAnnotation).
MitiAnnotation annotation_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const MitiAnnotation& a);

// A ratio that is either a value or undefined with the reason.
struct Ratio {
  std::optional<double> value;
  std::string undefined_reason;

  bool defined() const { return value.has_value(); }
};

double technical_global(double cultivating_change_talk, double softening_sustain_talk);
double relational_global(double partnership, double empathy);
// Undefined when the denominator is zero.
Ratio ratio(double numerator, double denominator, std::string_view undefined_reason);

struct MitiSummary {
  int total_reflections{0};
  Ratio complex_reflection_ratio;  // CR / (SR + CR)
  Ratio rq_ratio;                  // (SR + CR) / Q
  double technical_global{0};      // (CCT + SST) / 2
  double relational_global{0};     // (partnership + empathy) / 2
  Ratio adherent_ratio;            // (SEEK + AF + AUTO) / (SEEK + AF + AUTO + confront + persuade)
};

MitiSummary summarize(const MitiAnnotation& a);
nlohmann::ordered_json to_json(const MitiSummary& s);

// Indicator rows in report order: the four globals, the ten counts, then
// total_reflections, technical_global, relational_global and the three ratios.
const std::vector<std::string>& indicator_names();
bool is_ratio_indicator(std::string_view name);

// Linear interpolation between order statistics at h = (n - 1) p.
// Throws Error(EmptyInput) on an empty list.
double quantile(std::vector<double> values, double p);

enum class RatioMode { Macro, Pooled };

struct IndicatorStats {
  double mean{0};
  double q1{0};
  double q3{0};
  std::size_t n{0};
  std::size_t excluded{0};  // undefined ratios left out of the macro mean
};

struct GroupReport {
  std::string label;
  RatioMode ratio_mode{RatioMode::Macro};
  std::size_t n_annotations{0};
  // Indicators with no defined value are absent.
  std::map<std::string, IndicatorStats> indicators;
  // Both ratio aggregations, always reported.
  std::map<std::string, IndicatorStats> macro_ratios;
  std::map<std::string, Ratio> pooled_ratios;
};

// Ratio rows follow `mode`: macro uses the mean of defined per-annotation
// ratios; pooled uses the ratio of summed counts, with q1/q3 still taken over
// the defined per-annotation ratios. Throws Error(EmptyGroup).
GroupReport aggregate_group(const std::string& label, const std::vector<MitiAnnotation>& annotations,
                            RatioMode mode = RatioMode::Macro);
nlohmann::ordered_json to_json(const GroupReport& r);

struct ComparisonTable {
  std::vector<std::string> groups;
  std::vector<std::string> indicators;
  // cells[row][col]; nullopt renders as the absent marker.
  std::vector<std::vector<std::optional<std::string>>> cells;
};

inline constexpr std::string_view kAbsentMarker = "n/a";

// "mean(q1,q3)" to 2 decimals, groups as columns in input order.
// Throws Error(EmptyInput) with fewer than two reports.
ComparisonTable compare_groups(const std::vector<GroupReport>& reports);
nlohmann::ordered_json to_json(const ComparisonTable& t);
std::string to_text(const ComparisonTable& t);

// Dialogue handed to coders. Carries nothing but the id and the turns.
struct BlindEntry {
  std::string blind_id;
  std::vector<corpus::Turn> turns;
};

nlohmann::ordered_json to_json(const BlindEntry& e);
BlindEntry blind_entry_from_json(const nlohmann::json& j);

// Preamble, if any, becomes a leading counselor turn.
std::vector<corpus::Turn> coding_turns(const corpus::Dialogue& d);

struct SealedEntry {
  std::string group;
  std::string dialogue_id;
};

// blind_id -> origin. Read only by the report stage.
using SealedMap = std::map<std::string, SealedEntry>;

struct LabelledDialogue {
  std::string group;
  corpus::Dialogue dialogue;
};

struct BlindQueue {
  std::vector<BlindEntry> queue;
  SealedMap sealed;
};

// Seed-shuffled queue with fresh 16-hex-digit blind ids.
// Throws Error(EmptyInput).
BlindQueue build_blind_queue(const std::vector<LabelledDialogue>& dialogues, std::uint64_t seed);

std::string queue_json(const std::vector<BlindEntry>& queue);
std::vector<BlindEntry> parse_queue_json(std::string_view content);

// Written with mode 0600.
void write_sealed(const std::filesystem::path& path, const SealedMap& sealed);
SealedMap load_sealed(const std::filesystem::path& path);
nlohmann::ordered_json to_json(const SealedMap& sealed);

// Report stage: groups annotations by unblinded label (sorted), one report
// per group. Throws Error(InvalidAnnotation) for a blind_id missing from the
// sealed map.
std::vector<GroupReport> unblind_and_aggregate(const std::vector<MitiAnnotation>& annotations,
                                               const SealedMap& sealed,
                                               RatioMode mode = RatioMode::Macro);

}  // namespace miwb::miti

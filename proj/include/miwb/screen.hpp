#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "miwb/corpus.hpp"
#include "miwb/gateway.hpp"

namespace miwb::screen {

struct Aspect {
  std::string name;
  std::string description;
  int scale_min{1};
  int scale_max{5};
};

// Judge prompt placeholders: {{aspects}} and {{dialogue}}.
struct QualityRubric {
  std::vector<Aspect> aspects;
  std::string judge_prompt_template;

  // comprehensiveness, professionalism, authenticity, safety on 1-5.
  static QualityRubric standard();
};

// Throws Error(InvalidRubric) unless the four standard aspects are present
// (extra aspects allowed), names are unique, every scale has min < max and
// the template holds {{dialogue}} exactly once.
void validate(const QualityRubric& rubric);
QualityRubric rubric_from_json(const nlohmann::json& j);
QualityRubric load_rubric(const std::filesystem::path& path);

struct QualityScore {
  std::string dialogue_id;
  std::map<std::string, double> per_aspect;
  double total{0};
  std::vector<std::string> flags;  // e.g. clamped values
};

nlohmann::ordered_json to_json(const QualityScore& s, const QualityRubric& rubric);

// n distinct dialogues in draw order from a SeededRng(seed) partial
// Fisher-Yates. Throws Error(SampleTooLarge).
std::vector<corpus::Dialogue> sample_dialogues(const std::vector<corpus::Dialogue>& corpus,
                                               std::size_t n, std::uint64_t seed);

std::string render_judge_prompt(const QualityRubric& rubric, const corpus::Dialogue& dialogue);

// Reads `name=score` (or `name: score`) pairs for every aspect; failing that,
// the first N numbers in aspect order. Out-of-scale values are clamped and
// flagged. Returns nullopt when neither form yields a score per aspect.
std::optional<QualityScore> parse_judge_reply(std::string_view reply, const QualityRubric& rubric,
                                              const std::string& dialogue_id);

// One judge call; an unparseable reply is retried once before
// Error(JudgeUnparseable). Gateway errors propagate.
QualityScore score_dialogue(const corpus::Dialogue& dialogue, const QualityRubric& rubric,
                            gateway::Client& judge);

// Batch form of score_dialogue over the gateway's parallelism bound. Results
// in input order; the first failure is rethrown after all jobs settle.
std::vector<QualityScore> score_dialogues(const std::vector<corpus::Dialogue>& dialogues,
                                          const QualityRubric& rubric, gateway::Client& judge);

struct DatasetRank {
  std::string corpus;
  std::size_t n_scored{0};
  double mean_total{0};
  std::map<std::string, double> aspect_means;
};

// Descending by mean total, ties broken by corpus name ascending.
// Throws Error(EmptyScores) when the map or any corpus's list is empty.
std::vector<DatasetRank> rank_datasets(const std::map<std::string, std::vector<QualityScore>>& scores);

nlohmann::ordered_json to_json(const DatasetRank& r);
std::string ranked_table(const std::vector<DatasetRank>& ranks, const QualityRubric& rubric);

}  // namespace miwb::screen

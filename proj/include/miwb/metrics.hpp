#pragma once

#include <array>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "miwb/corpus.hpp"
#include "miwb/rounds.hpp"

namespace miwb::metrics {

using corpus::Language;

struct TokenSequence {
  std::vector<std::string> tokens;
  Language mode{Language::Cjk};
};

// Cjk/Mixed: every CJK codepoint is a token; other text is split into runs of
// letters/digits at whitespace and punctuation. Case is preserved.
// Latin: ASCII-lowercased, split on whitespace, punctuation stripped from
// token edges, tokens left empty are dropped.
TokenSequence tokenize(std::string_view text, Language mode);

// Add-epsilon smoothing applied to zero n-gram match counts.
inline constexpr double kBleuEpsilon = 0.1;

// Clipped n-gram statistics for one (candidate, reference) pair.
struct BleuStats {
  std::array<double, 4> matches{};
  std::array<double, 4> totals{};  // candidate n-gram counts
  double candidate_length{0};
  double reference_length{0};
};

BleuStats bleu_stats(const TokenSequence& candidate, const TokenSequence& reference);

// Score in [0,100] from (possibly summed) statistics.
double bleu_from_stats(const BleuStats& s);

// Sentence BLEU-4 in [0,100]: uniform weights over clipped 1..4-gram
// precisions, brevity penalty exp(1 - r/c) when c < r. Orders longer than the
// candidate are left out of the mean (effective order), a zero match count is
// replaced by kBleuEpsilon, and a candidate without a single unigram match
// scores 0. Throws Error(EmptyReference); an empty candidate scores 0.
double bleu4(const TokenSequence& candidate, const TokenSequence& reference);

struct Prf {
  double precision{0};
  double recall{0};
  double f1{0};
};

// Clipped n-gram overlap, scaled to [0,100]. Precision is 0 when the
// candidate holds fewer than n tokens; recall is 0 when the reference does.
Prf rouge_n(const TokenSequence& candidate, const TokenSequence& reference, int n);

// Longest-common-subsequence ROUGE, scaled to [0,100].
Prf rouge_l(const TokenSequence& candidate, const TokenSequence& reference);

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b);

struct PairScore {
  std::string dialogue_id;
  std::size_t round_index{0};
  double bleu4{0};
  Prf rouge1;
  Prf rouge2;
  Prf rougeL;
};

enum class Aggregation {
  SentenceMean,  // score each pair, average over pairs
  Pooled,        // sum counts over pairs, score once
};

struct MetricReport {
  std::string model_ref;
  std::size_t n_pairs{0};
  std::size_t n_failed{0};
  double bleu4{0};
  double rouge1_f{0};
  double rouge2_f{0};
  double rougeL_f{0};
  Aggregation aggregation{Aggregation::SentenceMean};
  std::vector<PairScore> per_pair;
};

using ReferenceKey = std::pair<std::string, std::size_t>;  // (dialogue_id, round_index)
using ReferenceMap = std::map<ReferenceKey, std::string>;

ReferenceMap references_from(const std::vector<rounds::RoundSample>& samples);

// All outputs must share one model_ref. Failed outputs are excluded and
// counted. Throws Error(MissingReference) naming the first unmatched key and
// Error(NoPairs) when nothing is left to score.
MetricReport evaluate_outputs(const std::vector<rounds::ModelOutput>& outputs,
                              const ReferenceMap& references, Language mode,
                              Aggregation aggregation = Aggregation::SentenceMean);

nlohmann::ordered_json to_json(const MetricReport& r, bool per_pair);
MetricReport metric_report_from_json(const nlohmann::json& j);

}  // namespace miwb::metrics

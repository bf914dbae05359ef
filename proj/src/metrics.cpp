#include "miwb/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "miwb/error.hpp"
#include "miwb/text.hpp"

namespace miwb::metrics {

using ojson = nlohmann::ordered_json;

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts ngram_counts(const std::vector<std::string>& toks, std::size_t n) {
  NgramCounts counts;
  if (toks.size() < n) return counts;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) {
    ++counts[std::vector<std::string>(toks.begin() + static_cast<std::ptrdiff_t>(i),
                                      toks.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

std::size_t clipped_overlap(const NgramCounts& cand, const NgramCounts& ref) {
  std::size_t overlap = 0;
  for (const auto& [gram, c] : cand) {
    auto it = ref.find(gram);
    if (it != ref.end()) overlap += std::min(c, it->second);
  }
  return overlap;
}

std::size_t gram_total(std::size_t len, std::size_t n) { return len >= n ? len - n + 1 : 0; }

Prf make_prf(double overlap, double cand_total, double ref_total) {
  Prf r;
  r.precision = cand_total > 0 ? 100.0 * overlap / cand_total : 0.0;
  r.recall = ref_total > 0 ? 100.0 * overlap / ref_total : 0.0;
  const double sum = r.precision + r.recall;
  r.f1 = sum > 0 ? 2.0 * r.precision * r.recall / sum : 0.0;
  return r;
}

void require_reference(const TokenSequence& reference) {
  if (reference.tokens.empty()) throw Error(Errc::EmptyReference, "reference has no tokens");
}

}  // namespace

TokenSequence tokenize(std::string_view s, Language mode) {
  TokenSequence out;
  out.mode = mode;
  const auto cps = text::decode_utf8(s);
  if (mode == Language::Latin) {
    std::vector<char32_t> tok;
    auto flush = [&] {
      std::size_t b = 0;
      std::size_t e = tok.size();
      while (b < e && !text::is_word_char(tok[b]) && !text::is_cjk(tok[b])) ++b;
      while (e > b && !text::is_word_char(tok[e - 1]) && !text::is_cjk(tok[e - 1])) --e;
      if (b < e) {
        std::string t;
        for (std::size_t i = b; i < e; ++i) text::append_utf8(t, text::ascii_lower(tok[i]));
        out.tokens.push_back(std::move(t));
      }
      tok.clear();
    };
    for (char32_t cp : cps) {
      if (text::is_space(cp)) {
        flush();
      } else {
        tok.push_back(cp);
      }
    }
    flush();
    return out;
  }
  std::string run;
  auto flush_run = [&] {
    if (!run.empty()) out.tokens.push_back(std::move(run));
    run.clear();
  };
  for (char32_t cp : cps) {
    if (text::is_cjk(cp)) {
      flush_run();
      out.tokens.push_back(text::encode_utf8(cp));
    } else if (text::is_word_char(cp)) {
      text::append_utf8(run, cp);
    } else {
      flush_run();
    }
  }
  flush_run();
  return out;
}

BleuStats bleu_stats(const TokenSequence& candidate, const TokenSequence& reference) {
  BleuStats s;
  s.candidate_length = static_cast<double>(candidate.tokens.size());
  s.reference_length = static_cast<double>(reference.tokens.size());
  for (std::size_t n = 1; n <= 4; ++n) {
    s.matches[n - 1] = static_cast<double>(
        clipped_overlap(ngram_counts(candidate.tokens, n), ngram_counts(reference.tokens, n)));
    s.totals[n - 1] = static_cast<double>(gram_total(candidate.tokens.size(), n));
  }
  return s;
}

double bleu_from_stats(const BleuStats& s) {
  if (s.candidate_length == 0 || s.matches[0] == 0) return 0.0;
  // Effective order: n-gram orders the candidate is too short to contain are
  // left out of the geometric mean rather than smoothed.
  double log_sum = 0.0;
  int orders = 0;
  for (int n = 0; n < 4; ++n) {
    if (s.totals[n] == 0) continue;
    const double m = s.matches[n] > 0 ? s.matches[n] : kBleuEpsilon;
    log_sum += std::log(m / s.totals[n]);
    ++orders;
  }
  const double bp = s.candidate_length < s.reference_length
                        ? std::exp(1.0 - s.reference_length / s.candidate_length)
                        : 1.0;
  return std::clamp(100.0 * bp * std::exp(log_sum / orders), 0.0, 100.0);
}

double bleu4(const TokenSequence& candidate, const TokenSequence& reference) {
  require_reference(reference);
  return bleu_from_stats(bleu_stats(candidate, reference));
}

Prf rouge_n(const TokenSequence& candidate, const TokenSequence& reference, int n) {
  require_reference(reference);
  if (n < 1) throw Error(Errc::InvalidArgument, "rouge_n needs n >= 1");
  const auto un = static_cast<std::size_t>(n);
  const double overlap = static_cast<double>(
      clipped_overlap(ngram_counts(candidate.tokens, un), ngram_counts(reference.tokens, un)));
  return make_prf(overlap, static_cast<double>(gram_total(candidate.tokens.size(), un)),
                  static_cast<double>(gram_total(reference.tokens.size(), un)));
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0);
  std::vector<std::size_t> cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

Prf rouge_l(const TokenSequence& candidate, const TokenSequence& reference) {
  require_reference(reference);
  const double lcs = static_cast<double>(lcs_length(candidate.tokens, reference.tokens));
  return make_prf(lcs, static_cast<double>(candidate.tokens.size()),
                  static_cast<double>(reference.tokens.size()));
}

ReferenceMap references_from(const std::vector<rounds::RoundSample>& samples) {
  ReferenceMap refs;
  for (const auto& s : samples) refs[{s.dialogue_id, s.round_index}] = s.reference;
  return refs;
}

MetricReport evaluate_outputs(const std::vector<rounds::ModelOutput>& outputs,
                              const ReferenceMap& references, Language mode,
                              Aggregation aggregation) {
  MetricReport report;
  report.aggregation = aggregation;
  if (!outputs.empty()) report.model_ref = outputs.front().model_ref;

  BleuStats pooled_bleu;
  double pooled[3][3] = {};  // [rouge1, rouge2, rougeL][overlap, cand_total, ref_total]
  double sums[4] = {};
  std::set<ReferenceKey> seen;

  for (const auto& o : outputs) {
    if (o.model_ref != report.model_ref) {
      throw Error(Errc::InvalidArgument, "outputs mix model_ref '" + report.model_ref +
                                             "' and '" + o.model_ref + "'");
    }
    if (!seen.insert({o.dialogue_id, o.round_index}).second) {
      throw Error(Errc::InvalidArgument, "duplicate output for (" + o.dialogue_id + ", " +
                                             std::to_string(o.round_index) + ")");
    }
    if (o.failed) {
      ++report.n_failed;
      continue;
    }
    auto it = references.find({o.dialogue_id, o.round_index});
    if (it == references.end()) {
      throw Error(Errc::MissingReference, "no reference for (" + o.dialogue_id + ", " +
                                              std::to_string(o.round_index) + ")");
    }
    const TokenSequence cand = tokenize(o.generated, mode);
    const TokenSequence ref = tokenize(it->second, mode);

    PairScore p;
    p.dialogue_id = o.dialogue_id;
    p.round_index = o.round_index;
    p.bleu4 = bleu4(cand, ref);
    p.rouge1 = rouge_n(cand, ref, 1);
    p.rouge2 = rouge_n(cand, ref, 2);
    p.rougeL = rouge_l(cand, ref);
    sums[0] += p.bleu4;
    sums[1] += p.rouge1.f1;
    sums[2] += p.rouge2.f1;
    sums[3] += p.rougeL.f1;

    const BleuStats bs = bleu_stats(cand, ref);
    for (int n = 0; n < 4; ++n) {
      pooled_bleu.matches[n] += bs.matches[n];
      pooled_bleu.totals[n] += bs.totals[n];
    }
    pooled_bleu.candidate_length += bs.candidate_length;
    pooled_bleu.reference_length += bs.reference_length;
    const double clen = static_cast<double>(cand.tokens.size());
    const double rlen = static_cast<double>(ref.tokens.size());
    for (std::size_t n = 1; n <= 2; ++n) {
      pooled[n - 1][0] += static_cast<double>(
          clipped_overlap(ngram_counts(cand.tokens, n), ngram_counts(ref.tokens, n)));
      pooled[n - 1][1] += static_cast<double>(gram_total(cand.tokens.size(), n));
      pooled[n - 1][2] += static_cast<double>(gram_total(ref.tokens.size(), n));
    }
    pooled[2][0] += static_cast<double>(lcs_length(cand.tokens, ref.tokens));
    pooled[2][1] += clen;
    pooled[2][2] += rlen;

    report.per_pair.push_back(std::move(p));
  }

  report.n_pairs = report.per_pair.size();
  if (report.n_pairs == 0) {
    throw Error(Errc::NoPairs, "no scorable outputs for model '" + report.model_ref + "'");
  }
  const double n = static_cast<double>(report.n_pairs);
  if (aggregation == Aggregation::SentenceMean) {
    report.bleu4 = sums[0] / n;
    report.rouge1_f = sums[1] / n;
    report.rouge2_f = sums[2] / n;
    report.rougeL_f = sums[3] / n;
  } else {
    report.bleu4 = bleu_from_stats(pooled_bleu);
    report.rouge1_f = make_prf(pooled[0][0], pooled[0][1], pooled[0][2]).f1;
    report.rouge2_f = make_prf(pooled[1][0], pooled[1][1], pooled[1][2]).f1;
    report.rougeL_f = make_prf(pooled[2][0], pooled[2][1], pooled[2][2]).f1;
  }
  return report;
}

namespace {

ojson prf_json(const Prf& p) {
  ojson j;
  j["precision"] = p.precision;
  j["recall"] = p.recall;
  j["f1"] = p.f1;
  return j;
}

}  // namespace

ojson to_json(const MetricReport& r, bool per_pair) {
  ojson j;
  j["model_ref"] = r.model_ref;
  j["n_pairs"] = r.n_pairs;
  j["n_failed"] = r.n_failed;
  j["aggregation"] = r.aggregation == Aggregation::SentenceMean ? "sentence_mean" : "pooled";
  j["bleu4"] = r.bleu4;
  j["rouge1_f"] = r.rouge1_f;
  j["rouge2_f"] = r.rouge2_f;
  j["rougeL_f"] = r.rougeL_f;
  if (per_pair) {
    j["per_pair"] = ojson::array();
    for (const auto& p : r.per_pair) {
      ojson pj;
      pj["dialogue_id"] = p.dialogue_id;
      pj["round_index"] = p.round_index;
      pj["bleu4"] = p.bleu4;
      pj["rouge1"] = prf_json(p.rouge1);
      pj["rouge2"] = prf_json(p.rouge2);
      pj["rougeL"] = prf_json(p.rougeL);
      j["per_pair"].push_back(std::move(pj));
    }
  }
  return j;
}

MetricReport metric_report_from_json(const nlohmann::json& j) {
  MetricReport r;
  try {
    r.model_ref = j.at("model_ref").get<std::string>();
    r.n_pairs = j.at("n_pairs").get<std::size_t>();
    r.n_failed = j.value("n_failed", std::size_t{0});
    r.aggregation = j.value("aggregation", std::string("sentence_mean")) == "pooled"
                        ? Aggregation::Pooled
                        : Aggregation::SentenceMean;
    r.bleu4 = j.at("bleu4").get<double>();
    r.rouge1_f = j.at("rouge1_f").get<double>();
    r.rouge2_f = j.at("rouge2_f").get<double>();
    r.rougeL_f = j.at("rougeL_f").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::MalformedRecord, std::string("metric report: ") + e.what());
  }
  return r;
}

}  // namespace miwb::metrics

// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
// failure. Runs without network access.
#include <httplib.h>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "miwb/io.hpp"
#include "miwb/metrics.hpp"
#include "miwb/miti.hpp"
#include "miwb/random.hpp"
#include "miwb/rounds.hpp"
#include "miwb/service.hpp"
#include "oracle.hpp"
#include "support.hpp"

using namespace miwb;
using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

// Collects failure messages for one criterion.
struct Check {
  std::vector<std::string> failures;

  void expect(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
  void near(double got, double want, double tol, const std::string& what) {
    if (!(std::fabs(got - want) <= tol)) {
      std::ostringstream os;
      os.precision(12);
      os << what << ": got " << got << ", want " << want << " +/- " << tol;
      failures.push_back(os.str());
    }
  }
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Two-decimal published values: the exact result must round to the printed
// figure, so the half-unit boundary is included.
constexpr double kTableTol = 0.005 + 1e-12;

void table_arithmetic(Check& c) {
  const auto t0 = Clock::now();
  c.near(miti::technical_global(4.00, 3.89), 3.94, kTableTol, "technical global, model A");
  c.near(miti::technical_global(3.97, 3.87), 3.92, kTableTol, "technical global, real dialogues");
  c.near(miti::relational_global(3.44, 3.78), 3.61, kTableTol, "relational global, model A");
  c.near(miti::relational_global(4.00, 3.80), 3.90, kTableTol, "relational global, model C");
  c.near(miti::relational_global(3.83, 4.07), 3.95, kTableTol, "relational global, real dialogues");

  const std::vector<std::array<double, 3>> reflections{
      {13.50, 6.00, 19.5}, {13.25, 4.25, 17.5}, {13.10, 5.00, 18.1}, {14.17, 6.13, 20.3}};
  for (const auto& [sr, cr, total] : reflections) {
    c.near(sr + cr, total, kTableTol, "total reflections " + std::to_string(total));
  }

  const auto a = miti::ratio(6.00, 13.50 + 6.00, "no reflections");
  const auto b = miti::ratio(4.25, 13.25 + 4.25, "no reflections");
  c.expect(a.defined() && b.defined(), "pooled complex reflection ratio defined");
  if (a.defined()) c.near(*a.value, 0.31, kTableTol, "pooled complex reflection ratio, model A");
  if (b.defined()) c.near(*b.value, 0.24, kTableTol, "pooled complex reflection ratio, model B");

  // The same figures through the pooled aggregation path: one annotation per
  // group whose counts are the published means scaled by 100.
  miti::MitiAnnotation ann;
  ann.blind_id = "x";
  ann.coder_id = "c";
  ann.globals = {4, 4, 4, 4};
  ann.counts.simple_reflections = 1350;
  ann.counts.complex_reflections = 600;
  ann.counts.asking_questions = 1;
  const auto g = miti::aggregate_group("A", {ann}, miti::RatioMode::Pooled);
  const auto& pooled = g.pooled_ratios.at("complex_reflection_ratio");
  c.expect(pooled.defined(), "aggregated pooled ratio defined");
  if (pooled.defined()) c.near(*pooled.value, 0.31, kTableTol, "aggregated pooled ratio, model A");

  c.expect(seconds_since(t0) < 1.0, "runtime under 1 s");
}

metrics::TokenSequence seq(const std::vector<std::string>& t) {
  return {t, corpus::Language::Latin};
}

std::vector<std::string> random_tokens(SeededRng& rng) {
  static const std::vector<std::string> alphabet{"a", "b", "c", "d", "e"};
  const std::size_t len = 1 + rng.below(8);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < len; ++i) out.push_back(alphabet[rng.below(alphabet.size())]);
  return out;
}

void metric_oracle(Check& c) {
  const auto t0 = Clock::now();
  SeededRng rng(314159);
  constexpr int kPairs = 500;
  int mismatches = 0;
  int identity_misses = 0;
  int dominance_violations = 0;
  for (int i = 0; i < kPairs; ++i) {
    const auto cand = random_tokens(rng);
    const auto ref = random_tokens(rng);
    const auto sc = seq(cand);
    const auto sr = seq(ref);
    const double bleu = metrics::bleu4(sc, sr);
    const double r1 = metrics::rouge_n(sc, sr, 1).f1;
    const double r2 = metrics::rouge_n(sc, sr, 2).f1;
    const double rl = metrics::rouge_l(sc, sr).f1;
    if (std::fabs(bleu - test::oracle::bleu4(cand, ref)) > 1e-9 ||
        std::fabs(r1 - test::oracle::rouge_n_f1(cand, ref, 1)) > 1e-9 ||
        std::fabs(r2 - test::oracle::rouge_n_f1(cand, ref, 2)) > 1e-9 ||
        std::fabs(rl - test::oracle::rouge_l_f1(cand, ref)) > 1e-9) {
      ++mismatches;
    }
    if (rl > r1 + 1e-12) ++dominance_violations;

    const auto self = seq(cand);
    if (metrics::bleu4(self, self) != 100.0 || metrics::rouge_n(self, self, 1).f1 != 100.0 ||
        metrics::rouge_l(self, self).f1 != 100.0 ||
        (cand.size() >= 2 && metrics::rouge_n(self, self, 2).f1 != 100.0)) {
      ++identity_misses;
    }
  }
  c.expect(mismatches == 0, std::to_string(mismatches) + " pairs disagree with the oracle");
  c.expect(identity_misses == 0, std::to_string(identity_misses) + " identity pairs below 100");
  c.expect(dominance_violations == 0,
           std::to_string(dominance_violations) + " pairs with ROUGE-L above ROUGE-1");
  c.expect(seconds_since(t0) < 60.0, "runtime under 1 min");
}

void round_splitter(Check& c) {
  const auto fixture = corpus::load_native(test::fixture("smoking_three_rounds.json"));
  const auto samples = rounds::split_rounds(fixture, rounds::FixedInstruction{});
  c.expect(samples.size() == 3, "fixture yields 3 samples, got " + std::to_string(samples.size()));
  for (std::size_t k = 0; k < samples.size() && k < 3; ++k) {
    c.expect(samples[k].history.size() == k, "sample " + std::to_string(k + 1) + " history length");
  }

  SeededRng rng(2718);
  for (int i = 0; i < 500; ++i) {
    const std::size_t n_turns = 2 + rng.below(15);
    std::vector<std::string> turns;
    for (std::size_t t = 0; t < n_turns; ++t) turns.push_back("u" + std::to_string(rng.next() % 97));
    const auto d = test::make_dialogue("r" + std::to_string(i), turns);
    const auto got = rounds::split_rounds(d, rounds::FixedInstruction{});
    if (got.size() != n_turns / 2) {
      c.expect(false, "dialogue " + d.id + ": sample count != pair count");
      continue;
    }
    for (const auto& s : got) {
      std::vector<std::string> rebuilt;
      for (const auto& [q, r] : s.history) {
        rebuilt.push_back(q);
        rebuilt.push_back(r);
      }
      rebuilt.push_back(s.query);
      rebuilt.push_back(s.reference);
      bool ok = rebuilt.size() == 2 * s.round_index;
      for (std::size_t t = 0; ok && t < rebuilt.size(); ++t) ok = rebuilt[t] == d.turns[t].text;
      c.expect(ok, "dialogue " + d.id + " round " + std::to_string(s.round_index) + ": prefix mismatch");
    }
  }
}

// Runs every offline stage into `dir` and returns the artifacts by name.
std::map<std::string, std::string> run_pipeline(const test::TempDir& dir, Check& c) {
  const auto p = [&](const std::string& name) { return (dir / name).string(); };
  test::write_text(dir / "echo.json", R"({"mode": "echo", "model": "stub"})");
  const std::vector<std::vector<std::string>> steps{
      {"ingest", "--input", test::fixture("synthetic_five.txt").string(), "--format", "plain-transcript",
       "--source", "synthetic", "--out", p("corpus.json"), "--report", p("normalization.jsonl")},
      {"stats", "--corpus", p("corpus.json"), "--out", p("stats.json")},
      {"split-train-test", "--corpus", p("corpus.json"), "--n-test", "2", "--seed", "17", "--train",
       p("train.json"), "--test", p("test.json")},
      {"split-rounds", "--corpus", p("corpus.json"), "--out", p("alpaca.json")},
      {"collect", "--samples", p("alpaca.json"), "--endpoint", p("echo.json"), "--model-ref", "stub",
       "--out", p("outputs.jsonl")},
      {"eval-auto", "--samples", p("alpaca.json"), "--outputs", p("outputs.jsonl"), "--per-pair",
       "--out", p("auto.json")},
      {"blind-queue", "--group", "train=" + p("train.json"), "--group", "test=" + p("test.json"),
       "--seed", "17", "--queue", p("queue.json"), "--sealed", p("sealed.json")},
      {"training-config", "--set", "num_train_epochs=2", "--out", p("training.json")},
  };
  for (const auto& args : steps) {
    const auto r = test::run_cli(args);
    c.expect(r.exit_code == 0, args[0] + " exited " + std::to_string(r.exit_code) + ": " + r.err);
    if (r.exit_code != 0) return {};
  }
  std::map<std::string, std::string> out;
  for (const auto& e : std::filesystem::directory_iterator(dir.path())) {
    out[e.path().filename().string()] = io::read_file(e.path());
  }
  return out;
}

void pipeline_substitute(Check& c) {
  const auto t0 = Clock::now();
  test::TempDir a;
  test::TempDir b;
  const auto first = run_pipeline(a, c);
  const auto second = run_pipeline(b, c);
  c.expect(seconds_since(t0) < 10.0, "two runs under 10 s");
  if (!c.failures.empty()) return;
  c.expect(first.size() == 12, "expected 12 artifacts, got " + std::to_string(first.size()));
  for (const auto& [name, content] : first) {
    const auto it = second.find(name);
    c.expect(it != second.end() && it->second == content, name + " differs between runs");
  }
  const json report = json::parse(first.at("auto.json"));
  c.expect(report["n_pairs"].get<std::size_t>() > 0, "metric report covers pairs");
  c.expect(json::parse(first.at("queue.json")).size() == 5, "all 5 dialogues queued");
}

// Running workbench on an ephemeral port.
class Server {
 public:
  explicit Server(service::ServiceConfig cfg) : wb_(std::move(cfg)) {
    port_ = wb_.bind("127.0.0.1", 0);
    thread_ = std::thread([this] { wb_.listen(); });
    wb_.wait_until_ready();
  }
  ~Server() {
    wb_.stop();
    thread_.join();
  }
  int port() const { return port_; }

 private:
  service::Workbench wb_;
  int port_{0};
  std::thread thread_;
};

json annotation_body(const std::string& coder) {
  json j;
  j["coder_id"] = coder;
  j["globals"] = {{"cultivating_change_talk", 4},
                  {"softening_sustain_talk", 4},
                  {"empathy", 4},
                  {"partnership", 3}};
  j["counts"] = json::object();
  for (const auto& name : miti::behavior_names()) j["counts"][name] = 1;
  return j;
}

void blind_integrity(Check& c) {
  test::TempDir root;
  service::ServiceConfig cfg;
  cfg.data_root = root.path();
  cfg.seed = 5;
  gateway::EndpointConfig echo;
  echo.model = "stub-counselor";
  echo.mode = gateway::EndpointMode::Echo;
  cfg.models["origin-model-alpha"] = echo;
  cfg.models["origin-model-beta"] = echo;

  std::vector<std::string> identifiers{"origin-model-alpha", "origin-model-beta", "stub-counselor",
                                       "model_ref", "session_id", "session-"};
  std::vector<std::pair<std::string, std::string>> payloads;  // (where, body)
  {
    Server server(cfg);
    httplib::Client http("127.0.0.1", server.port());
    const auto post = [&](const std::string& path, const json& body) {
      auto r = http.Post(path, body.dump(), "application/json");
      return r ? std::make_pair(r->status, r->body) : std::make_pair(0, std::string());
    };
    for (const std::string model : {"origin-model-alpha", "origin-model-beta", "origin-model-alpha"}) {
      const auto [st, body] = post("/sessions", {{"topic", "reducing drinking"}, {"model_ref", model}});
      c.expect(st == 201, "create session");
      if (st != 201) return;
      const std::string id = json::parse(body)["session_id"];
      post("/sessions/" + id + "/messages", {{"text", "I drink most evenings."}});
      post("/sessions/" + id + "/messages", {{"text", "Maybe I could skip weekdays."}});
      c.expect(post("/sessions/" + id + "/complete", json::object()).first == 200, "complete session");
    }
    for (const std::string coder : {"coder-1", "coder-2"}) {
      for (;;) {
        auto r = http.Get("/coding/next?coder=" + coder);
        if (!r || r->status != 200) {
          c.expect(r && r->status == 204, "queue drains with 204");
          break;
        }
        payloads.emplace_back("GET /coding/next", r->body);
        const json entry = json::parse(r->body);
        for (const auto& [k, v] : entry.items()) {
          c.expect(k == "blind_id" || k == "turns", "unexpected field '" + k + "' in coding entry");
        }
        const auto [st, body] = post("/coding/" + entry["blind_id"].get<std::string>(), annotation_body(coder));
        c.expect(st == 201, "annotation accepted");
        payloads.emplace_back("POST /coding", body);
      }
    }
    auto bad = http.Post("/coding/unknown", annotation_body("coder-1").dump(), "application/json");
    if (bad) payloads.emplace_back("POST /coding (404)", bad->body);

    const auto report = http.Get("/reports/miti");
    c.expect(report && report->status == 200, "report stage responds");
    if (report && report->status == 200) {
      const json r = json::parse(report->body);
      c.expect(r["groups"].size() == 2 && r["groups"][0]["label"] == "origin-model-alpha" &&
                   r["groups"][0]["n_annotations"] == 4 && r["groups"][1]["n_annotations"] == 2,
               "report stage unblinds to the right groups");
    }
  }
  payloads.emplace_back("queue.jsonl", io::read_file(root / "queue.jsonl"));
  payloads.emplace_back("annotations.jsonl", io::read_file(root / "annotations.jsonl"));
  c.expect(payloads.size() == 15, "walked " + std::to_string(payloads.size()) + " payloads, want 15");
  for (const auto& [where, body] : payloads) {
    for (const auto& id : identifiers) {
      c.expect(body.find(id) == std::string::npos, "'" + id + "' leaked in " + where);
    }
  }

  // Annotations alone cannot be attributed: without the sealed map every
  // blind id is unknown.
  store::DataRoot data(root.path());
  const auto annotations = data.load_annotations().latest_list();
  const auto without = test::code_of([&] { miti::unblind_and_aggregate(annotations, {}); });
  c.expect(without == Errc::InvalidAnnotation, "unblinding without the sealed map is refused");
  const auto with = miti::unblind_and_aggregate(annotations, miti::load_sealed(root / "sealed" / "unblinding.json"));
  c.expect(with.size() == 2, "sealed map unblinds both groups");
}

miti::MitiAnnotation zero_annotation(const std::string& id) {
  miti::MitiAnnotation a;
  a.blind_id = id;
  a.coder_id = "c";
  a.globals = {3, 3, 3, 3};
  return a;
}

void degenerate_summaries(Check& c) {
  const auto zero = zero_annotation("z");
  const auto s = miti::summarize(zero);
  c.expect(s.total_reflections == 0, "total reflections 0");
  for (const auto* r : {&s.complex_reflection_ratio, &s.rq_ratio, &s.adherent_ratio}) {
    c.expect(!r->defined() && !r->undefined_reason.empty(), "zero denominator is marked undefined");
  }
  const json j = json::parse(miti::to_json(s).dump());
  for (const char* k : {"complex_reflection_ratio", "rq_ratio", "adherent_ratio"}) {
    c.expect(j[k].is_null(), std::string(k) + " serialized as null, not 0");
  }

  // Only one of the three ratios defined at a time.
  auto questions_only = zero_annotation("q");
  questions_only.counts.asking_questions = 4;
  const auto sq = miti::summarize(questions_only);
  c.expect(sq.rq_ratio.defined() && *sq.rq_ratio.value == 0.0, "rq ratio 0/4 is a defined 0");
  c.expect(!sq.complex_reflection_ratio.defined(), "no reflections leaves CR ratio undefined");

  auto reflective = zero_annotation("r");
  reflective.counts.simple_reflections = 3;
  reflective.counts.complex_reflections = 1;
  reflective.counts.asking_questions = 2;
  reflective.counts.affirming = 1;

  const auto g = miti::aggregate_group("g", {zero, questions_only, reflective}, miti::RatioMode::Macro);
  const auto& cr = g.indicators.at("complex_reflection_ratio");
  c.expect(cr.n == 1 && cr.excluded == 2, "CR ratio macro uses 1 value and excludes 2");
  c.near(cr.mean, 0.25, 1e-12, "CR ratio macro mean");
  const auto& rq = g.indicators.at("rq_ratio");
  c.expect(rq.n == 2 && rq.excluded == 1, "R:Q macro uses 2 values and excludes 1");
  c.near(rq.mean, (0.0 + 2.0) / 2.0, 1e-12, "R:Q macro mean");
  const auto& adh = g.indicators.at("adherent_ratio");
  c.expect(adh.n == 1 && adh.excluded == 2, "adherent macro uses 1 value and excludes 2");

  const auto all_zero = miti::aggregate_group("z", {zero, zero_annotation("z2")}, miti::RatioMode::Macro);
  c.expect(!all_zero.indicators.contains("complex_reflection_ratio"), "all-undefined ratio is absent");
  c.expect(!all_zero.pooled_ratios.at("rq_ratio").defined(), "pooled ratio over zero totals undefined");

  const auto table = miti::compare_groups({g, all_zero});
  bool marker = false;
  for (std::size_t row = 0; row < table.indicators.size(); ++row) {
    if (table.indicators[row] == "complex_reflection_ratio") marker = !table.cells[row][1].has_value();
  }
  c.expect(marker, "comparison shows the absent marker for the undefined column");
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Check&)>>> criteria{
      {"table arithmetic cross-checks", table_arithmetic},
      {"metric oracle suite", metric_oracle},
      {"round-splitter properties", round_splitter},
      {"deterministic offline pipeline (fine-tuning substitute)", pipeline_substitute},
      {"blind-coding integrity", blind_integrity},
      {"summary-score degenerate suite", degenerate_summaries},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Check c;
    try {
      run(c);
    } catch (const std::exception& e) {
      c.failures.push_back(std::string("threw: ") + e.what());
    }
    std::cout << (c.failures.empty() ? "PASS " : "FAIL ") << name << "\n";
    for (const auto& f : c.failures) std::cout << "     " << f << "\n";
    failed += c.failures.empty() ? 0 : 1;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed\n";
  return failed == 0 ? 0 : 1;
}

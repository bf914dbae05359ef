// miwb: command-line entry points for every pipeline stage.
#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <csignal>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "miwb/corpus.hpp"
#include "miwb/error.hpp"
#include "miwb/gateway.hpp"
#include "miwb/io.hpp"
#include "miwb/metrics.hpp"
#include "miwb/miti.hpp"
#include "miwb/rounds.hpp"
#include "miwb/screen.hpp"
#include "miwb/service.hpp"
#include "miwb/store.hpp"
#include "miwb/text.hpp"
#include "miwb/transcribe.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;
using namespace miwb;

namespace {

// Writes to `path`, or stdout when the path is empty.
void emit(const std::string& path, const std::string& content) {
  if (path.empty()) {
    std::cout << content;
  } else {
    io::write_file_atomic(path, content);
  }
}

std::pair<std::string, std::string> split_assignment(const std::string& s, const char* what) {
  const auto eq = s.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw Error(Errc::InvalidArgument, std::string(what) + " must look like name=value, got '" + s + "'");
  }
  return {s.substr(0, eq), s.substr(eq + 1)};
}

std::shared_ptr<gateway::AuditLog> audit_log(const std::string& path) {
  if (path.empty()) return std::make_shared<gateway::AuditLog>();
  return std::make_shared<gateway::AuditLog>(fs::path(path));
}

rounds::FixedInstruction instruction_from(const std::string& path) {
  if (path.empty()) return rounds::FixedInstruction();
  return rounds::FixedInstruction(text::trim(io::read_file(path)));
}

std::vector<miti::MitiAnnotation> read_annotations(const std::string& path, std::size_t& corrupt) {
  store::JsonlStore file(path);
  if (!fs::exists(path)) throw Error(Errc::FileUnreadable, "cannot open '" + path + "'");
  auto loaded = file.load();
  corrupt = loaded.corrupt_lines;
  // Latest annotation per (blind_id, coder_id), in first-seen order.
  std::vector<miti::MitiAnnotation> out;
  std::map<std::pair<std::string, std::string>, std::size_t> index;
  for (const auto& r : loaded.records) {
    auto a = miti::annotation_from_json(r);
    miti::validate(a);
    const auto key = std::make_pair(a.blind_id, a.coder_id);
    if (auto it = index.find(key); it != index.end()) {
      out[it->second] = std::move(a);
    } else {
      index.emplace(key, out.size());
      out.push_back(std::move(a));
    }
  }
  return out;
}

service::Workbench* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Motivational interviewing dataset and evaluation workbench"};
  app.require_subcommand(1);

  // ingest
  std::string in_path, in_format = "native-json", in_source = "unknown", out_path, report_path;
  auto* ingest = app.add_subcommand("ingest", "Parse a raw corpus into the native format");
  ingest->add_option("--input", in_path, "Raw corpus file")->required();
  ingest->add_option("--format", in_format, "native-json | turn-list-json | plain-transcript");
  ingest->add_option("--source", in_source, "Source label for records that lack one");
  ingest->add_option("--out", out_path, "Native corpus output")->required();
  ingest->add_option("--report", report_path, "Normalization report (JSON Lines)");

  // stats
  std::string corpus_path, averaging = "pooled";
  auto* stats = app.add_subcommand("stats", "Corpus statistics");
  stats->add_option("--corpus", corpus_path, "Native corpus")->required();
  stats->add_option("--averaging", averaging, "pooled | macro");
  stats->add_option("--out", out_path, "Output file (default stdout)");

  // screen
  std::vector<std::string> screen_corpora;
  std::size_t sample_n = 10;
  std::uint64_t seed = 0;
  std::string endpoint_path, rubric_path, gateway_audit;
  auto* screen_cmd = app.add_subcommand("screen", "Judge-score sampled dialogues and rank corpora");
  screen_cmd->add_option("--corpus", screen_corpora, "name=path, repeatable")->required();
  screen_cmd->add_option("--n", sample_n, "Dialogues sampled per corpus");
  screen_cmd->add_option("--seed", seed, "Sampling seed");
  screen_cmd->add_option("--judge", endpoint_path, "Judge endpoint config")->required();
  screen_cmd->add_option("--rubric", rubric_path, "Rubric file (default rubric when omitted)");
  screen_cmd->add_option("--out", out_path, "Scores and ranking JSON (default stdout)");
  screen_cmd->add_option("--gateway-audit", gateway_audit, "Gateway audit log (JSON Lines)");

  // transcribe
  std::string template_path, audit_path;
  std::size_t tolerance = 2;
  auto* transcribe_cmd = app.add_subcommand("transcribe", "Transcribe dialogues into MI style");
  transcribe_cmd->add_option("--corpus", corpus_path, "Native corpus")->required();
  transcribe_cmd->add_option("--endpoint", endpoint_path, "Transcriber endpoint config")->required();
  transcribe_cmd->add_option("--template", template_path, "Template file (default template when omitted)");
  transcribe_cmd->add_option("--tolerance", tolerance, "Allowed round-count drift");
  transcribe_cmd->add_option("--out", out_path, "Accepted dialogues, native corpus")->required();
  transcribe_cmd->add_option("--audit", audit_path, "Every result incl. raw replies (JSON Lines)");
  transcribe_cmd->add_option("--gateway-audit", gateway_audit, "Gateway audit log (JSON Lines)");

  // split-train-test
  std::size_t n_test = 0;
  std::string train_path, test_path;
  auto* split_cmd = app.add_subcommand("split-train-test", "Seeded train/test split");
  split_cmd->add_option("--corpus", corpus_path, "Native corpus")->required();
  split_cmd->add_option("--n-test", n_test, "Test set size")->required();
  split_cmd->add_option("--seed", seed, "Split seed");
  split_cmd->add_option("--train", train_path, "Train corpus output")->required();
  split_cmd->add_option("--test", test_path, "Test corpus output")->required();

  // split-rounds
  std::string instruction_path;
  auto* rounds_cmd = app.add_subcommand("split-rounds", "Round-based Alpaca samples");
  rounds_cmd->add_option("--corpus", corpus_path, "Native corpus")->required();
  rounds_cmd->add_option("--out", out_path, "Alpaca JSON output")->required();
  rounds_cmd->add_option("--instruction-file", instruction_path, "Fixed instruction text");

  // collect
  std::string samples_path, model_ref;
  auto* collect_cmd = app.add_subcommand("collect", "Query a model for every round sample");
  collect_cmd->add_option("--samples", samples_path, "Alpaca JSON")->required();
  collect_cmd->add_option("--endpoint", endpoint_path, "Model endpoint config")->required();
  collect_cmd->add_option("--model-ref", model_ref, "Label stored with each output")->required();
  collect_cmd->add_option("--instruction-file", instruction_path, "Fixed instruction text");
  collect_cmd->add_option("--out", out_path, "Model outputs (JSON Lines)")->required();
  collect_cmd->add_option("--gateway-audit", gateway_audit, "Gateway audit log (JSON Lines)");

  // eval-auto
  std::string outputs_path, language = "auto", aggregation = "sentence";
  bool per_pair = false;
  auto* eval_auto = app.add_subcommand("eval-auto", "BLEU-4 and ROUGE against references");
  eval_auto->add_option("--samples", samples_path, "Alpaca JSON holding the references")->required();
  eval_auto->add_option("--outputs", outputs_path, "Model outputs (JSON Lines)")->required();
  eval_auto->add_option("--language", language, "auto | cjk | latin | mixed");
  eval_auto->add_option("--aggregation", aggregation, "sentence | pooled");
  eval_auto->add_flag("--per-pair", per_pair, "Include per-pair scores");
  eval_auto->add_option("--out", out_path, "Metric report JSON (default stdout)");

  // blind-queue
  std::vector<std::string> groups;
  std::string queue_path, sealed_path;
  auto* blind_cmd = app.add_subcommand("blind-queue", "Blind dialogues for MITI coding");
  blind_cmd->add_option("--group", groups, "label=corpus.json, repeatable")->required();
  blind_cmd->add_option("--seed", seed, "Queue seed");
  blind_cmd->add_option("--queue", queue_path, "Blinded queue output")->required();
  blind_cmd->add_option("--sealed", sealed_path, "Sealed unblinding map output")->required();

  // eval-miti
  std::string annotations_path;
  auto* eval_miti = app.add_subcommand("eval-miti", "MITI summary scores per annotation");
  eval_miti->add_option("--annotations", annotations_path, "Annotations (JSON Lines)")->required();
  eval_miti->add_option("--out", out_path, "Summaries JSON (default stdout)");

  // report
  std::string ratio_mode = "macro", text_path;
  auto* report_cmd = app.add_subcommand("report", "Unblind annotations and compare groups");
  report_cmd->add_option("--annotations", annotations_path, "Annotations (JSON Lines)")->required();
  report_cmd->add_option("--sealed", sealed_path, "Sealed unblinding map")->required();
  report_cmd->add_option("--mode", ratio_mode, "Ratio aggregation: macro | pooled");
  report_cmd->add_option("--out", out_path, "Report JSON (default stdout)");
  report_cmd->add_option("--text", text_path, "Aligned comparison table output");

  // serve
  std::string config_path;
  std::optional<std::uint64_t> serve_seed;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP API");
  serve_cmd->add_option("--config", config_path, "Service config")->required();
  serve_cmd->add_option("--seed", serve_seed, "Overrides the config seed");

  // training-config
  std::vector<std::string> overrides;
  auto* train_cmd = app.add_subcommand("training-config", "Fine-tuning manifest");
  train_cmd->add_option("--set", overrides, "key=value override, repeatable");
  train_cmd->add_option("--out", out_path, "Manifest JSON (default stdout)");

  static const std::set<std::string> kCommands = {
      "ingest", "stats", "screen", "transcribe", "split-train-test", "split-rounds", "collect",
      "eval-auto", "blind-queue", "eval-miti", "report", "serve", "training-config"};
  if (argc > 1 && argv[1][0] != '-' && !kCommands.contains(argv[1])) {
    std::cerr << ojson{{"error", errc_name(Errc::UnknownCommand)},
                       {"message", std::string("unknown command '") + argv[1] + "'"}}
                     .dump()
              << "\n";
    return 2;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << ojson{{"error", errc_name(Errc::InvalidArgument)}, {"message", e.what()}}.dump()
              << "\n";
    return 2;
  }

  try {
    if (*ingest) {
      auto fmt = corpus::parse_input_format(in_format);
      if (!fmt) throw Error(Errc::InvalidArgument, "unknown format '" + in_format + "'");
      auto parsed = corpus::parse_corpus(in_path, *fmt, {in_source});
      corpus::write_native(out_path, parsed.dialogues);
      if (!report_path.empty()) io::write_file_atomic(report_path, corpus::report_jsonl(parsed.actions));
      std::cout << ojson{{"dialogues", parsed.dialogues.size()},
                         {"normalization_actions", parsed.actions.size()}}
                       .dump()
                << "\n";
    } else if (*stats) {
      corpus::UtteranceAveraging mode;
      if (averaging == "pooled") mode = corpus::UtteranceAveraging::Pooled;
      else if (averaging == "macro") mode = corpus::UtteranceAveraging::Macro;
      else throw Error(Errc::InvalidArgument, "averaging must be pooled or macro");
      const auto ds = corpus::load_native(corpus_path);
      emit(out_path, corpus::to_json(corpus::corpus_stats(ds, mode)).dump(2) + "\n");
    } else if (*screen_cmd) {
      const auto rubric = rubric_path.empty() ? screen::QualityRubric::standard()
                                              : screen::load_rubric(rubric_path);
      gateway::Client judge(gateway::load_endpoint(endpoint_path), nullptr, audit_log(gateway_audit));
      std::map<std::string, std::vector<screen::QualityScore>> scores;
      std::vector<std::string> names;
      for (const auto& spec : screen_corpora) {
        const auto [name, path] = split_assignment(spec, "--corpus");
        const auto sample = screen::sample_dialogues(corpus::load_native(path), sample_n, seed);
        scores[name] = screen::score_dialogues(sample, rubric, judge);
        names.push_back(name);
      }
      const auto ranks = screen::rank_datasets(scores);
      ojson corpora = ojson::array();
      for (const auto& name : names) {
        ojson list = ojson::array();
        for (const auto& q : scores[name]) list.push_back(screen::to_json(q, rubric));
        const auto rank = std::find_if(ranks.begin(), ranks.end(),
                                       [&](const auto& r) { return r.corpus == name; });
        corpora.push_back({{"corpus", name},
                           {"n_sampled", scores[name].size()},
                           {"seed", seed},
                           {"scores", list},
                           {"means", screen::to_json(*rank)}});
      }
      ojson ranking = ojson::array();
      for (const auto& r : ranks) ranking.push_back(screen::to_json(r));
      emit(out_path, ojson{{"corpora", corpora}, {"ranking", ranking}}.dump(2) + "\n");
      if (!out_path.empty()) std::cout << screen::ranked_table(ranks, rubric);
    } else if (*transcribe_cmd) {
      const auto tmpl = template_path.empty()
                            ? transcribe::TranscriptionTemplate::reconstructed_default()
                            : transcribe::load_template(template_path);
      gateway::Client client(gateway::load_endpoint(endpoint_path), nullptr, audit_log(gateway_audit));
      const auto results =
          transcribe::transcribe_batch(corpus::load_native(corpus_path), tmpl, client, {tolerance});
      const auto ok = transcribe::accepted(results);
      if (!audit_path.empty()) io::write_file_atomic(audit_path, transcribe::audit_jsonl(results));
      if (ok.empty()) throw Error(Errc::EmptyCorpus, "no transcription parsed successfully");
      corpus::write_native(out_path, ok);
      std::cout << ojson{{"results", results.size()}, {"accepted", ok.size()}}.dump() << "\n";
    } else if (*split_cmd) {
      const auto split = transcribe::split_train_test(corpus::load_native(corpus_path), n_test, seed);
      corpus::write_native(train_path, split.train);
      corpus::write_native(test_path, split.test);
      std::cout << ojson{{"train", split.train.size()}, {"test", split.test.size()}, {"seed", seed}}.dump()
                << "\n";
    } else if (*rounds_cmd) {
      const auto samples =
          rounds::split_rounds(corpus::load_native(corpus_path), instruction_from(instruction_path));
      rounds::export_alpaca(samples, out_path);
      std::cout << ojson{{"samples", samples.size()}}.dump() << "\n";
    } else if (*collect_cmd) {
      const auto samples = rounds::import_alpaca(samples_path);
      gateway::Client model(gateway::load_endpoint(endpoint_path), nullptr, audit_log(gateway_audit));
      const auto outputs =
          rounds::collect_outputs(samples, model, instruction_from(instruction_path), model_ref);
      io::write_file_atomic(out_path, rounds::outputs_jsonl(outputs));
      std::size_t failed = 0;
      for (const auto& o : outputs) failed += o.failed ? 1 : 0;
      std::cout << ojson{{"outputs", outputs.size()}, {"failed", failed}}.dump() << "\n";
    } else if (*eval_auto) {
      const auto samples = rounds::import_alpaca(samples_path);
      const auto outputs = rounds::parse_outputs_jsonl(io::read_file(outputs_path));
      corpus::Language mode;
      if (language == "auto") {
        std::vector<corpus::Turn> refs;
        for (const auto& s : samples) refs.push_back({corpus::Speaker::Counselor, s.reference});
        mode = corpus::detect_language(refs);
      } else if (auto l = corpus::parse_language(language)) {
        mode = *l;
      } else {
        throw Error(Errc::InvalidArgument, "unknown language '" + language + "'");
      }
      metrics::Aggregation agg;
      if (aggregation == "sentence") agg = metrics::Aggregation::SentenceMean;
      else if (aggregation == "pooled") agg = metrics::Aggregation::Pooled;
      else throw Error(Errc::InvalidArgument, "aggregation must be sentence or pooled");
      const auto report =
          metrics::evaluate_outputs(outputs, metrics::references_from(samples), mode, agg);
      emit(out_path, metrics::to_json(report, per_pair).dump(2) + "\n");
    } else if (*blind_cmd) {
      std::vector<miti::LabelledDialogue> items;
      for (const auto& spec : groups) {
        const auto [label, path] = split_assignment(spec, "--group");
        for (auto& d : corpus::load_native(path)) items.push_back({label, std::move(d)});
      }
      const auto q = miti::build_blind_queue(items, seed);
      io::write_file_atomic(queue_path, miti::queue_json(q.queue));
      miti::write_sealed(sealed_path, q.sealed);
      std::cout << ojson{{"queued", q.queue.size()}}.dump() << "\n";
    } else if (*eval_miti) {
      std::size_t corrupt = 0;
      const auto annotations = read_annotations(annotations_path, corrupt);
      ojson list = ojson::array();
      for (const auto& a : annotations) {
        list.push_back({{"blind_id", a.blind_id},
                        {"coder_id", a.coder_id},
                        {"summary", miti::to_json(miti::summarize(a))}});
      }
      emit(out_path, ojson{{"summaries", list}, {"corrupt_lines", corrupt}}.dump(2) + "\n");
    } else if (*report_cmd) {
      miti::RatioMode mode;
      if (ratio_mode == "macro") mode = miti::RatioMode::Macro;
      else if (ratio_mode == "pooled") mode = miti::RatioMode::Pooled;
      else throw Error(Errc::InvalidArgument, "mode must be macro or pooled");
      std::size_t corrupt = 0;
      const auto annotations = read_annotations(annotations_path, corrupt);
      const auto reports = miti::unblind_and_aggregate(annotations, miti::load_sealed(sealed_path), mode);
      const auto table = miti::compare_groups(reports);
      ojson body;
      body["ratio_mode"] = ratio_mode;
      body["corrupt_lines"] = corrupt;
      ojson gs = ojson::array();
      for (const auto& r : reports) gs.push_back(miti::to_json(r));
      body["groups"] = gs;
      body["comparison"] = miti::to_json(table);
      emit(out_path, body.dump(2) + "\n");
      if (!text_path.empty()) io::write_file_atomic(text_path, miti::to_text(table));
      if (!out_path.empty()) std::cout << miti::to_text(table);
    } else if (*serve_cmd) {
      auto cfg = service::load_service_config(config_path);
      if (serve_seed) cfg.seed = *serve_seed;
      service::Workbench server(cfg);
      const int port = server.bind(cfg.host, cfg.port);
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cout << ojson{{"listening", cfg.host + ":" + std::to_string(port)}}.dump() << std::endl;
      server.listen();
      g_server = nullptr;
    } else if (*train_cmd) {
      json values = json::object();
      for (const auto& spec : overrides) {
        const auto [key, raw] = split_assignment(spec, "--set");
        try {
          values[key] = json::parse(raw);
        } catch (const json::parse_error&) {
          values[key] = raw;
        }
      }
      emit(out_path, transcribe::to_json(transcribe::emit_training_config(values)).dump(2) + "\n");
    }
  } catch (const EndpointError& e) {
    std::cerr << ojson{{"error", errc_name(e.code())},
                       {"message", e.what()},
                       {"attempts", e.attempts()},
                       {"last_status", e.last_status()}}
                     .dump()
              << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << ojson{{"error", errc_name(e.code())}, {"message", e.what()}}.dump() << "\n";
    return 1;
  }
  return 0;
}

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
#include "miwb/gateway.hpp"

namespace miwb::transcribe {

// Required section keys, in rendering order.
const std::vector<std::string>& section_keys();

struct TranscriptionTemplate {
  std::map<std::string, std::string> sections;
  std::string dialogue_placeholder = "{{dialogue}}";

  // Reconstructed default body. The original prompt text is not public; this
  // one summarises the MI tasks and techniques and is meant to be replaced.
  static TranscriptionTemplate reconstructed_default();
};

// Throws Error(MissingSection) for an absent or blank section, and
// Error(TemplateInvalid) for an empty placeholder or one that appears more
// than once across all sections.
void validate(const TranscriptionTemplate& t);

// Accepts the seven section keys at top level or under "sections", plus an
// optional "dialogue_placeholder".
TranscriptionTemplate template_from_json(const nlohmann::json& j);
TranscriptionTemplate load_template(const std::filesystem::path& path);
nlohmann::ordered_json to_json(const TranscriptionTemplate& t);

// Sections under "## <Title>" headers in declared order. The dialogue, as
// speaker-labelled lines, replaces the placeholder; with no placeholder it is
// appended under a final "## Source Dialogue" header.
std::string render_prompt(const TranscriptionTemplate& t, const corpus::Dialogue& dialogue);

struct Validation {
  bool round_count_ok{false};
  bool alternation_ok{false};
  bool parse_ok{false};
};

struct TranscriptionResult {
  std::string source_id;
  corpus::Dialogue transcribed;
  Validation validation;
  std::string raw_reply;
  std::string error;  // gateway failure in batch mode; empty otherwise
};

nlohmann::ordered_json to_json(const TranscriptionResult& r);

struct TranscribeOptions {
  std::size_t round_tolerance{2};
};

// Parses speaker-labelled lines out of a reply. Unlabelled lines before the
// first label are ignored; later ones continue the previous turn.
TranscriptionResult parse_reply(const corpus::Dialogue& source, std::string_view reply,
                                const TranscribeOptions& options = {});

// Throws EndpointError (and the other gateway errors). Malformed replies are
// returned with parse_ok=false.
TranscriptionResult transcribe_dialogue(const corpus::Dialogue& dialogue,
                                        const TranscriptionTemplate& t, gateway::Client& client,
                                        const TranscribeOptions& options = {});

// One result per input dialogue, ordered by source id. Gateway failures are
// recorded on the result instead of thrown.
std::vector<TranscriptionResult> transcribe_batch(const std::vector<corpus::Dialogue>& dialogues,
                                                  const TranscriptionTemplate& t,
                                                  gateway::Client& client,
                                                  const TranscribeOptions& options = {});

// Dialogues of results with parse_ok, in result order.
std::vector<corpus::Dialogue> accepted(const std::vector<TranscriptionResult>& results);

std::string audit_jsonl(const std::vector<TranscriptionResult>& results);

struct Split {
  std::vector<corpus::Dialogue> train;
  std::vector<corpus::Dialogue> test;
};

// The test set is the first n_test positions of a SeededRng(seed)
// Fisher-Yates permutation. Both partitions keep input order.
// Throws Error(SplitTooLarge) unless n_test < dialogues.size().
Split split_train_test(const std::vector<corpus::Dialogue>& dialogues, std::size_t n_test,
                       std::uint64_t seed);

// Fine-tuning manifest for an external trainer.
struct TrainingConfig {
  double learning_rate{1.0e-4};
  std::string lr_scheduler{"cosine"};
  int per_device_train_batch_size{1};
  int gradient_accumulation_steps{8};
  int num_train_epochs{3};
  double warmup_ratio{0.1};
  std::string precision{"bf16"};
  std::string adapter{"lora"};
  int logging_steps{10};
  int save_steps{500};
  // Field name -> "default" or "override".
  std::map<std::string, std::string> provenance;

  bool operator==(const TrainingConfig&) const = default;
};

// Published defaults with any overrides applied. Unknown keys or invalid
// values throw Error(InvalidConfig).
TrainingConfig emit_training_config(const nlohmann::json& overrides = nlohmann::json::object());
nlohmann::ordered_json to_json(const TrainingConfig& c);
TrainingConfig training_config_from_json(const nlohmann::json& j);

}  // namespace miwb::transcribe

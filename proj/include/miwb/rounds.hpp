#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "miwb/corpus.hpp"
#include "miwb/gateway.hpp"

namespace miwb::rounds {

// System instruction attached to every round-level sample.
class FixedInstruction {
 public:
  static constexpr std::string_view kDefault =
      "You are a psychological counselor with 20 years of experience. Your aim is to help "
      "visitors solve psychological problems through professional Motivational Interviewing "
      "counseling.";

  FixedInstruction() : text_(kDefault) {}
  // Throws Error(InvalidArgument) on blank text.
  explicit FixedInstruction(std::string text);

  const std::string& text() const { return text_; }

 private:
  std::string text_;
};

// One prior exchange: (client query, counselor reply).
using Exchange = std::pair<std::string, std::string>;

struct RoundSample {
  std::string dialogue_id;
  std::size_t round_index{1};  // 1-based
  std::string instruction;
  std::string query;
  std::vector<Exchange> history;  // rounds 1..round_index-1
  std::string reference;

  bool operator==(const RoundSample&) const = default;
};

struct ModelOutput {
  std::string dialogue_id;
  std::size_t round_index{1};
  std::string model_ref;
  std::string generated;
  bool failed{false};
  std::string error;  // empty unless failed

  bool operator==(const ModelOutput&) const = default;
};

// Sample k holds q_k as query, r_k as reference and the k-1 preceding pairs
// as history. A trailing unpaired client turn yields no sample. Throws
// Error(NoCompleteRound) when the dialogue has no complete round.
std::vector<RoundSample> split_rounds(const corpus::Dialogue& dialogue,
                                      const FixedInstruction& instruction);
std::vector<RoundSample> split_rounds(const std::vector<corpus::Dialogue>& dialogues,
                                      const FixedInstruction& instruction);

// Alpaca-style JSON array sorted by (dialogue_id, round_index). Each element
// is {instruction, input, output, history, dialogue_id, round}.
std::string alpaca_json(std::vector<RoundSample> samples);
void export_alpaca(const std::vector<RoundSample>& samples, const std::filesystem::path& path);
std::vector<RoundSample> parse_alpaca(std::string_view content);
std::vector<RoundSample> import_alpaca(const std::filesystem::path& path);

// The f_LLM(P_MI, h_k, q_k) request: system instruction, history as
// alternating user/assistant messages, then the query as the final user turn.
std::vector<gateway::ChatMessage> build_messages(const RoundSample& sample,
                                                 const FixedInstruction& instruction);

// One output per sample, in sample order. Per-sample gateway failures are
// recorded as failed outputs with empty text.
std::vector<ModelOutput> collect_outputs(const std::vector<RoundSample>& samples,
                                         gateway::Client& model,
                                         const FixedInstruction& instruction,
                                         const std::string& model_ref);

nlohmann::ordered_json to_json(const ModelOutput& o);
ModelOutput model_output_from_json(const nlohmann::json& j);
std::string outputs_jsonl(const std::vector<ModelOutput>& outputs);
std::vector<ModelOutput> parse_outputs_jsonl(std::string_view content);

}  // namespace miwb::rounds

#include "miwb/rounds.hpp"

#include <algorithm>
#include <sstream>

#include "miwb/error.hpp"
#include "miwb/io.hpp"
#include "miwb/text.hpp"

namespace miwb::rounds {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;
using corpus::Speaker;

FixedInstruction::FixedInstruction(std::string text) : text_(std::move(text)) {
  if (text::trim(text_).empty()) {
    throw Error(Errc::InvalidArgument, "fixed instruction must not be empty");
  }
}

std::vector<RoundSample> split_rounds(const corpus::Dialogue& dialogue,
                                      const FixedInstruction& instruction) {
  std::vector<Exchange> pairs;
  const auto& turns = dialogue.turns;
  for (std::size_t i = 0; i + 1 < turns.size(); ++i) {
    if (turns[i].speaker == Speaker::Client && turns[i + 1].speaker == Speaker::Counselor) {
      pairs.emplace_back(turns[i].text, turns[i + 1].text);
      ++i;
    }
  }
  if (pairs.empty()) {
    throw Error(Errc::NoCompleteRound,
                "dialogue '" + dialogue.id + "' has no complete client/counselor round");
  }
  std::vector<RoundSample> samples;
  samples.reserve(pairs.size());
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    RoundSample s;
    s.dialogue_id = dialogue.id;
    s.round_index = k + 1;
    s.instruction = instruction.text();
    s.query = pairs[k].first;
    s.reference = pairs[k].second;
    s.history.assign(pairs.begin(), pairs.begin() + static_cast<std::ptrdiff_t>(k));
    samples.push_back(std::move(s));
  }
  return samples;
}

std::vector<RoundSample> split_rounds(const std::vector<corpus::Dialogue>& dialogues,
                                      const FixedInstruction& instruction) {
  std::vector<RoundSample> all;
  for (const auto& d : dialogues) {
    auto s = split_rounds(d, instruction);
    all.insert(all.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
  }
  return all;
}

std::string alpaca_json(std::vector<RoundSample> samples) {
  std::stable_sort(samples.begin(), samples.end(), [](const auto& a, const auto& b) {
    return std::tie(a.dialogue_id, a.round_index) < std::tie(b.dialogue_id, b.round_index);
  });
  ojson arr = ojson::array();
  for (const auto& s : samples) {
    ojson e;
    e["instruction"] = s.instruction;
    e["input"] = s.query;
    e["output"] = s.reference;
    e["history"] = ojson::array();
    for (const auto& [q, r] : s.history) e["history"].push_back(ojson::array({q, r}));
    e["dialogue_id"] = s.dialogue_id;
    e["round"] = s.round_index;
    arr.push_back(std::move(e));
  }
  return arr.dump(2) + "\n";
}

void export_alpaca(const std::vector<RoundSample>& samples, const std::filesystem::path& path) {
  if (samples.empty()) throw Error(Errc::InvalidArgument, "no samples to export");
  io::write_file_atomic(path, alpaca_json(samples));
}

std::vector<RoundSample> parse_alpaca(std::string_view content) {
  std::vector<RoundSample> out;
  try {
    const json arr = json::parse(content);
    if (!arr.is_array()) throw Error(Errc::MalformedRecord, "alpaca file must be a JSON array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const json& e = arr[i];
      RoundSample s;
      s.instruction = e.at("instruction").get<std::string>();
      s.query = e.at("input").get<std::string>();
      s.reference = e.at("output").get<std::string>();
      for (const auto& h : e.value("history", json::array())) {
        if (!h.is_array() || h.size() != 2) {
          throw Error(Errc::MalformedRecord,
                      "element " + std::to_string(i) + ": history entries must be [q, r] pairs");
        }
        s.history.emplace_back(h[0].get<std::string>(), h[1].get<std::string>());
      }
      s.dialogue_id = e.value("dialogue_id", std::string("sample-") + std::to_string(i));
      s.round_index = e.value("round", s.history.size() + 1);
      out.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw Error(Errc::MalformedRecord, std::string("alpaca file: ") + e.what());
  }
  return out;
}

std::vector<RoundSample> import_alpaca(const std::filesystem::path& path) {
  return parse_alpaca(io::read_file(path));
}

std::vector<gateway::ChatMessage> build_messages(const RoundSample& sample,
                                                 const FixedInstruction& instruction) {
  using gateway::Role;
  std::vector<gateway::ChatMessage> msgs;
  msgs.reserve(2 * sample.history.size() + 2);
  msgs.push_back({Role::System, instruction.text()});
  for (const auto& [q, r] : sample.history) {
    msgs.push_back({Role::User, q});
    msgs.push_back({Role::Assistant, r});
  }
  msgs.push_back({Role::User, sample.query});
  return msgs;
}

std::vector<ModelOutput> collect_outputs(const std::vector<RoundSample>& samples,
                                         gateway::Client& model,
                                         const FixedInstruction& instruction,
                                         const std::string& model_ref) {
  if (samples.empty()) return {};
  std::vector<std::vector<gateway::ChatMessage>> jobs;
  jobs.reserve(samples.size());
  for (const auto& s : samples) jobs.push_back(build_messages(s, instruction));
  const auto results = model.run_batch(jobs, "round");

  std::vector<ModelOutput> outputs;
  outputs.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    ModelOutput o;
    o.dialogue_id = samples[i].dialogue_id;
    o.round_index = samples[i].round_index;
    o.model_ref = model_ref;
    if (results[i].ok) {
      o.generated = results[i].result.content;
    } else {
      o.failed = true;
      o.error = results[i].error;
    }
    outputs.push_back(std::move(o));
  }
  return outputs;
}

ojson to_json(const ModelOutput& o) {
  ojson j;
  j["dialogue_id"] = o.dialogue_id;
  j["round_index"] = o.round_index;
  j["model_ref"] = o.model_ref;
  j["generated"] = o.generated;
  j["failed"] = o.failed;
  if (o.failed) j["error"] = o.error;
  return j;
}

ModelOutput model_output_from_json(const json& j) {
  ModelOutput o;
  o.dialogue_id = j.at("dialogue_id").get<std::string>();
  o.round_index = j.at("round_index").get<std::size_t>();
  o.model_ref = j.at("model_ref").get<std::string>();
  o.generated = j.value("generated", std::string{});
  o.failed = j.value("failed", false);
  o.error = j.value("error", std::string{});
  return o;
}

std::string outputs_jsonl(const std::vector<ModelOutput>& outputs) {
  std::string out;
  for (const auto& o : outputs) {
    out += to_json(o).dump();
    out += '\n';
  }
  return out;
}

std::vector<ModelOutput> parse_outputs_jsonl(std::string_view content) {
  std::vector<ModelOutput> out;
  std::istringstream in{std::string(content)};
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (text::trim(line).empty()) continue;
    try {
      out.push_back(model_output_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw Error(Errc::MalformedRecord, "outputs line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace miwb::rounds

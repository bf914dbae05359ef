#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "miwb/gateway.hpp"
#include "miwb/miti.hpp"

namespace miwb::store {

struct LoadResult {
  std::vector<nlohmann::json> records;
  std::size_t corrupt_lines{0};
};

// Append-only JSON Lines file. Each append rewrites the file through a temp
// file and rename, so a crash leaves either the old or the new content.
// Appends are serialized; reads take a consistent snapshot.
class JsonlStore {
 public:
  explicit JsonlStore(std::filesystem::path path);

  // Throws Error(StorageFailure).
  void append(const nlohmann::ordered_json& record);
  // Unparseable lines (e.g. a truncated tail) are skipped and counted.
  LoadResult load() const;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  mutable std::mutex mu_;
};

enum class Motivation { Low, Medium, High };
std::string_view to_string(Motivation m);
std::optional<Motivation> parse_motivation(std::string_view s);

enum class SessionStatus { Open, Completed, Abandoned };
std::string_view to_string(SessionStatus s);
std::optional<SessionStatus> parse_session_status(std::string_view s);

struct SessionRecord {
  std::string session_id;
  std::string topic;
  Motivation baseline_motivation{Motivation::Medium};
  bool motivation_seeded{false};  // true when drawn from the server seed
  std::string model_ref;
  std::vector<gateway::ChatMessage> messages;
  SessionStatus status{SessionStatus::Open};
  std::string created_at;
  std::string updated_at;

  bool operator==(const SessionRecord&) const = default;
};

nlohmann::ordered_json to_json(const SessionRecord& s);
SessionRecord session_from_json(const nlohmann::json& j);

// Throws Error(InvalidConversation) unless messages start with one system
// message and user/assistant alternate after it.
void validate(const SessionRecord& s);

struct AnnotationState {
  // Latest annotation per (blind_id, coder_id).
  std::map<std::pair<std::string, std::string>, miti::MitiAnnotation> latest;
  std::vector<miti::MitiAnnotation> history;
  std::size_t corrupt_lines{0};

  std::vector<miti::MitiAnnotation> latest_list() const;
};

// Stores under one data root:
//   sessions.jsonl      one SessionRecord snapshot per mutation
//   annotations.jsonl   one MitiAnnotation per submission
//   queue.jsonl         one BlindEntry per enqueued dialogue
//   sealed/unblinding.json   blind_id -> origin, mode 0600
//   reports/auto/*.json automatic metric reports
class DataRoot {
 public:
  explicit DataRoot(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  JsonlStore& sessions() { return sessions_; }
  JsonlStore& annotations() { return annotations_; }
  JsonlStore& queue() { return queue_; }
  std::filesystem::path sealed_path() const { return root_ / "sealed" / "unblinding.json"; }
  std::filesystem::path auto_reports_dir() const { return root_ / "reports" / "auto"; }

  // Replay to latest state per session id, in first-seen order.
  std::vector<SessionRecord> load_sessions(std::size_t* corrupt = nullptr) const;
  AnnotationState load_annotations() const;
  std::vector<miti::BlindEntry> load_queue(std::size_t* corrupt = nullptr) const;

 private:
  std::filesystem::path root_;
  JsonlStore sessions_;
  JsonlStore annotations_;
  JsonlStore queue_;
};

// Current UTC time as ISO-8601 with milliseconds.
std::string utc_now();

}  // namespace miwb::store

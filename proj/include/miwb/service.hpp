#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "miwb/gateway.hpp"
#include "miwb/store.hpp"

namespace httplib {
class Server;
}

namespace miwb::service {

// Starter topics for live sessions; any free-form topic is accepted.
const std::vector<std::string>& starter_topics();

struct ServiceConfig {
  std::filesystem::path data_root;
  std::string host{"127.0.0.1"};
  int port{8080};
  std::uint64_t seed{0};
  std::string instruction;  // empty: the default fixed instruction
  // model_ref -> counselor endpoint
  std::map<std::string, gateway::EndpointConfig> models;
};

// JSON: {data_root, host?, port?, seed?, instruction?, models: {ref: endpoint
// object or path to an endpoint file}}. Relative paths resolve against the
// config file's directory. Throws Error(InvalidConfig).
ServiceConfig service_config_from_json(const nlohmann::json& j,
                                       const std::filesystem::path& base_dir = ".");
ServiceConfig load_service_config(const std::filesystem::path& path);

class Workbench {
 public:
  // `clients` overrides the endpoints built from config (tests inject stubs).
  explicit Workbench(ServiceConfig config,
                     std::map<std::string, std::shared_ptr<gateway::Client>> clients = {});
  ~Workbench();

  Workbench(const Workbench&) = delete;
  Workbench& operator=(const Workbench&) = delete;

  // Returns the bound port (an ephemeral one when `port` is 0).
  int bind(const std::string& host, int port);
  // Blocks until stop().
  void listen();
  // Returns once a concurrent listen() is accepting connections.
  void wait_until_ready();
  void stop();

  const ServiceConfig& config() const { return config_; }

 private:
  void routes();
  store::SessionRecord create_session(const nlohmann::json& body);
  std::mutex& session_mutex(const std::string& id);

  ServiceConfig config_;
  std::map<std::string, std::shared_ptr<gateway::Client>> clients_;
  store::DataRoot data_;
  std::unique_ptr<httplib::Server> server_;

  std::mutex state_mu_;  // guards the maps and vectors below
  std::map<std::string, store::SessionRecord> sessions_;
  std::map<std::string, std::unique_ptr<std::mutex>> session_mu_;
  std::size_t next_ordinal_{1};
  std::vector<miti::BlindEntry> queue_;
  store::AnnotationState annotations_;
  std::mutex sealed_mu_;  // serializes read-modify-write of the sealed map
};

}  // namespace miwb::service

#include "support.hpp"

#include <fcntl.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace miwb::test {

namespace fs = std::filesystem;

TempDir::TempDir() {
  static std::atomic<int> counter{0};
  std::random_device rd;
  path_ = fs::temp_directory_path() /
          ("miwb-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++) + "-" +
           std::to_string(rd()));
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

fs::path fixture(const std::string& name) { return fs::path(MIWB_FIXTURE_DIR) / name; }
fs::path cli_path() { return fs::path(MIWB_CLI_PATH); }

namespace {

std::string slurp_fd(int fd) {
  std::string out;
  char buf[4096];
  for (;;) {
    const ssize_t n = ::read(fd, buf, sizeof buf);
    if (n > 0) {
      out.append(buf, static_cast<std::size_t>(n));
    } else if (n == 0 || errno != EINTR) {
      break;
    }
  }
  return out;
}

}  // namespace

CommandResult run_cli(const std::vector<std::string>& args) {
  // stderr goes to a temp file so a full pipe can never deadlock the child.
  TempDir tmp;
  const fs::path err_path = tmp / "stderr";
  int out_pipe[2];
  if (::pipe(out_pipe) != 0) throw std::runtime_error("pipe failed");
  const pid_t pid = ::fork();
  if (pid < 0) throw std::runtime_error("fork failed");
  if (pid == 0) {
    ::dup2(out_pipe[1], STDOUT_FILENO);
    const int err_fd = ::open(err_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0600);
    ::dup2(err_fd, STDERR_FILENO);
    ::close(out_pipe[0]);
    ::close(out_pipe[1]);
    std::vector<std::string> storage = args;
    std::string exe = cli_path().string();
    std::vector<char*> argv;
    argv.push_back(exe.data());
    for (auto& a : storage) argv.push_back(a.data());
    argv.push_back(nullptr);
    ::execv(exe.c_str(), argv.data());
    ::_exit(127);
  }
  ::close(out_pipe[1]);
  CommandResult r;
  r.out = slurp_fd(out_pipe[0]);
  ::close(out_pipe[0]);
  int status = 0;
  ::waitpid(pid, &status, 0);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream err(err_path);
  std::stringstream ss;
  ss << err.rdbuf();
  r.err = ss.str();
  return r;
}

void write_text(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << content;
}

corpus::Dialogue make_dialogue(const std::string& id, const std::vector<std::string>& turns,
                               corpus::Language language) {
  corpus::Dialogue d;
  d.id = id;
  d.source = "test";
  d.language = language;
  for (std::size_t i = 0; i < turns.size(); ++i) {
    d.turns.push_back({i % 2 == 0 ? corpus::Speaker::Client : corpus::Speaker::Counselor, turns[i]});
  }
  return d;
}

std::shared_ptr<gateway::Client> fn_client(FnTransport::Fn fn, int max_retries,
                                           int max_parallel) {
  gateway::EndpointConfig cfg;
  cfg.base_url = "http://127.0.0.1:1";
  cfg.model = "stub";
  cfg.max_retries = max_retries;
  cfg.max_parallel = max_parallel;
  auto client =
      std::make_shared<gateway::Client>(cfg, std::make_shared<FnTransport>(std::move(fn)));
  client->set_sleeper([](std::chrono::duration<double>) {});
  return client;
}

std::string last_content(const nlohmann::json& request) {
  return request.at("messages").back().at("content").get<std::string>();
}

std::optional<Errc> code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

}  // namespace miwb::test

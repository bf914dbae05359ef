#include "miwb/io.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>
#include <system_error>

#include "miwb/error.hpp"

namespace fs = std::filesystem;

namespace miwb::io {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::FileUnreadable, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw Error(Errc::FileUnreadable, "read failed for '" + path.string() + "'");
  return ss.str();
}

void write_file_atomic(const fs::path& path, std::string_view content, unsigned mode) {
  std::error_code ec;
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path(), ec);
    if (ec) {
      throw Error(Errc::WriteFailure,
                  "cannot create '" + path.parent_path().string() + "': " + ec.message());
    }
  }
  const fs::path tmp = path.string() + ".tmp";
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC,
                        mode != 0 ? static_cast<mode_t>(mode) : 0644);
  if (fd < 0) {
    throw Error(Errc::WriteFailure, "cannot open '" + tmp.string() + "': " + std::strerror(errno));
  }
  if (mode != 0) ::fchmod(fd, static_cast<mode_t>(mode));

  std::size_t off = 0;
  while (off < content.size()) {
    const ssize_t n = ::write(fd, content.data() + off, content.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      const std::string msg = std::strerror(errno);
      ::close(fd);
      throw Error(Errc::WriteFailure, "write failed for '" + tmp.string() + "': " + msg);
    }
    off += static_cast<std::size_t>(n);
  }
  if (::fsync(fd) != 0 || ::close(fd) != 0) {
    throw Error(Errc::WriteFailure, "fsync failed for '" + tmp.string() + "'");
  }
  if (::rename(tmp.c_str(), path.c_str()) != 0) {
    throw Error(Errc::WriteFailure, "rename to '" + path.string() + "' failed: " +
                                        std::strerror(errno));
  }
  // Persist the directory entry as well.
  const fs::path dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
  const int dfd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY | O_CLOEXEC);
  if (dfd >= 0) {
    ::fsync(dfd);
    ::close(dfd);
  }
}

}  // namespace miwb::io

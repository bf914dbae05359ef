#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace miwb::io {

// Throws Error(FileUnreadable).
std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temp file, fsyncs it, then renames over `path`.
// Throws Error(WriteFailure). `mode` is applied to the temp file before the
// rename when non-zero (e.g. 0600).
void write_file_atomic(const std::filesystem::path& path, std::string_view content,
                       unsigned mode = 0);

}  // namespace miwb::io

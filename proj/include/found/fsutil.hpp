#pragma once

#include <string>

namespace found::fsutil {

/// Write-to-temp then rename: no partial artifacts on failure.
void atomic_write(const std::string& path, const std::string& bytes);

std::string read_file(const std::string& path);

void ensure_parent_dir(const std::string& path);

}  // namespace found::fsutil

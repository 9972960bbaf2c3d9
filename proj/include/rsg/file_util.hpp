#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

namespace rsg {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Writes `contents` to `<path>.tmp` and renames it over `path`, so readers
/// never observe a partially written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

/// Shortest decimal string that round-trips to the same double.
std::string format_double(double v);

}  // namespace rsg

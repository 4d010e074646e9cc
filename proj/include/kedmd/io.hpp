#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace kedmd {

/// Malformed or unreadable input files.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shortest decimal text that parses back to exactly the same double.
std::string format_double(double value);
double parse_double(std::string_view text);

struct CsvTable {
  std::vector<std::string> header;
  Eigen::MatrixXd rows;  // one record per row

  /// Column position of `name`; throws IoError if absent.
  [[nodiscard]] Eigen::Index column(std::string_view name) const;
};

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const Eigen::Ref<const Eigen::MatrixXd>& rows);
CsvTable read_csv(const std::filesystem::path& path);

void write_text(const std::filesystem::path& path, std::string_view content);
std::string read_text(const std::filesystem::path& path);

/// "prefix1", ..., "prefixN"
std::vector<std::string> numbered_names(std::string_view prefix, int count);

}  // namespace kedmd

#include "kedmd/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace kedmd {

std::string format_double(double value) {
  char buffer[32];
  auto [end, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
  if (ec != std::errc{}) throw IoError("format_double: conversion failed");
  return std::string(buffer, end);
}

double parse_double(std::string_view text) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) {
    text.remove_suffix(1);
  }
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw IoError("cannot parse number '" + std::string(text) + "'");
  }
  return value;
}

Eigen::Index CsvTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<Eigen::Index>(i);
  }
  throw IoError("CSV has no column '" + std::string(name) + "'");
}

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const Eigen::Ref<const Eigen::MatrixXd>& rows) {
  if (static_cast<Eigen::Index>(header.size()) != rows.cols()) {
    throw IoError("write_csv: header has " + std::to_string(header.size()) + " names for " +
                  std::to_string(rows.cols()) + " columns");
  }
  std::string out;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) out += ',';
    out += header[i];
  }
  out += '\n';
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    for (Eigen::Index c = 0; c < rows.cols(); ++c) {
      if (c) out += ',';
      out += format_double(rows(r, c));
    }
    out += '\n';
  }
  write_text(path, out);
}

namespace {

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    fields.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

}  // namespace

CsvTable read_csv(const std::filesystem::path& path) {
  const std::string content = read_text(path);
  std::istringstream stream(content);
  std::string line;
  CsvTable table;
  if (!std::getline(stream, line)) throw IoError(path.string() + ": empty CSV");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  for (auto field : split(line)) table.header.emplace_back(field);

  std::vector<std::vector<double>> records;
  std::size_t line_number = 1;
  while (std::getline(stream, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split(line);
    if (fields.size() != table.header.size()) {
      throw IoError(path.string() + ":" + std::to_string(line_number) + ": expected " +
                    std::to_string(table.header.size()) + " fields");
    }
    std::vector<double> record;
    record.reserve(fields.size());
    for (auto field : fields) record.push_back(parse_double(field));
    records.push_back(std::move(record));
  }
  table.rows.resize(static_cast<Eigen::Index>(records.size()),
                    static_cast<Eigen::Index>(table.header.size()));
  for (std::size_t r = 0; r < records.size(); ++r) {
    for (std::size_t c = 0; c < records[r].size(); ++c) {
      table.rows(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = records[r][c];
    }
  }
  return table;
}

void write_text(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("write to " + path.string() + " failed");
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::vector<std::string> numbered_names(std::string_view prefix, int count) {
  std::vector<std::string> names;
  names.reserve(static_cast<std::size_t>(count));
  for (int i = 1; i <= count; ++i) names.push_back(std::string(prefix) + std::to_string(i));
  return names;
}

}  // namespace kedmd

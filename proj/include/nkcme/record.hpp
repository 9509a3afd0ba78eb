#pragma once

// Run records: per-step / per-epoch CSV rows and a JSON summary written last.

#include <json.hpp>

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

namespace nkcme::record {

/// Shortest decimal that round-trips the double exactly.
std::string format_double(double v);

/// 64-bit FNV-1a of the bytes, rendered as 16 hex digits.
std::string fnv1a_hex(const std::string& bytes);

using Cell = std::variant<double, long long, std::string>;

/// Column-named table that always carries the run id in its first column.
class RunRecord {
 public:
  RunRecord(std::string run_id, std::vector<std::string> columns);

  void add_row(std::vector<Cell> cells);

  const std::string& run_id() const { return run_id_; }
  const std::vector<std::string>& columns() const { return columns_; }
  const std::vector<std::vector<Cell>>& rows() const { return rows_; }

  std::string to_csv() const;
  void write_csv(const std::string& path) const;

 private:
  std::string run_id_;
  std::vector<std::string> columns_;
  std::vector<std::vector<Cell>> rows_;
};

/// Writes to a temporary sibling and renames it into place.
void write_file_atomic(const std::string& path, const std::string& contents);

void write_json_atomic(const std::string& path, const nlohmann::ordered_json& j);

/// Version string embedded in summaries.
std::string version_string();

}  // namespace nkcme::record

#include "nkcme/record.hpp"

#include "nkcme/error.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace nkcme::record {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw IoError("number formatting failed");
  return std::string(buf, ptr);
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

RunRecord::RunRecord(std::string run_id, std::vector<std::string> columns)
    : run_id_(std::move(run_id)), columns_(std::move(columns)) {}

void RunRecord::add_row(std::vector<Cell> cells) {
  if (cells.size() != columns_.size())
    throw ShapeError("run record row has " + std::to_string(cells.size()) + " cells, expected " +
                     std::to_string(columns_.size()));
  rows_.push_back(std::move(cells));
}

namespace {

std::string cell_text(const Cell& c) {
  if (const auto* d = std::get_if<double>(&c)) return format_double(*d);
  if (const auto* i = std::get_if<long long>(&c)) return std::to_string(*i);
  return std::get<std::string>(c);
}

}  // namespace

std::string RunRecord::to_csv() const {
  std::ostringstream os;
  os << "run_id";
  for (const auto& c : columns_) os << ',' << c;
  os << '\n';
  for (const auto& row : rows_) {
    os << run_id_;
    for (const auto& cell : row) os << ',' << cell_text(cell);
    os << '\n';
  }
  return os.str();
}

void RunRecord::write_csv(const std::string& path) const { write_file_atomic(path, to_csv()); }

void write_file_atomic(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp + " for writing");
    out << contents;
    if (!out) throw IoError("failed writing " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp + " to " + path + ": " + ec.message());
}

void write_json_atomic(const std::string& path, const nlohmann::ordered_json& j) {
  write_file_atomic(path, j.dump(2) + "\n");
}

std::string version_string() { return "nkcme 0.1.0"; }

}  // namespace nkcme::record

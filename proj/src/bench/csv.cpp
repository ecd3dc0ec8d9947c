#include "ikd/bench/harness.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

namespace ikd::bench {
namespace {

constexpr const char* kTimingHeader =
    "op_index,incremental_update_time,query_time,static_rebuild_time,static_query_time,tree_size,"
    "alpha_bal_observed,alpha_del_observed";
constexpr const char* kDistributionHeader = "tree_size,trial,sparse_time,compact_time,sparse_rebuilds,compact_rebuilds";

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << std::fixed << std::setprecision(6);
  return out;
}

std::vector<std::vector<std::string>> read_rows(const std::string& path, const char* header) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != header) throw std::runtime_error(path + ": unexpected header");
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

void need(const std::vector<std::string>& row, std::size_t n, const std::string& path) {
  if (row.size() != n) throw std::runtime_error(path + ": malformed row");
}

}  // namespace

void emit_csv(const std::vector<TimingRecord>& records, const std::string& path) {
  auto out = open_out(path);
  out << kTimingHeader << '\n';
  for (const auto& r : records) {
    out << r.op_index << ',' << r.incremental_update_time << ',' << r.query_time << ',' << r.static_rebuild_time << ','
        << r.static_query_time << ',' << r.tree_size << ',' << r.alpha_bal_observed << ',' << r.alpha_del_observed
        << '\n';
  }
}

void emit_csv(const std::vector<DistributionRecord>& records, const std::string& path) {
  auto out = open_out(path);
  out << kDistributionHeader << '\n';
  for (const auto& r : records) {
    out << r.tree_size << ',' << r.trial << ',' << r.sparse_time << ',' << r.compact_time << ',' << r.sparse_rebuilds
        << ',' << r.compact_rebuilds << '\n';
  }
}

std::vector<TimingRecord> read_timing_csv(const std::string& path) {
  std::vector<TimingRecord> out;
  for (const auto& row : read_rows(path, kTimingHeader)) {
    need(row, 8, path);
    out.push_back({std::stoull(row[0]), std::stod(row[1]), std::stod(row[2]), std::stod(row[3]), std::stod(row[4]),
                   std::stoull(row[5]), std::stod(row[6]), std::stod(row[7])});
  }
  return out;
}

std::vector<DistributionRecord> read_distribution_csv(const std::string& path) {
  std::vector<DistributionRecord> out;
  for (const auto& row : read_rows(path, kDistributionHeader)) {
    need(row, 6, path);
    out.push_back({std::stoull(row[0]), std::stoull(row[1]), std::stod(row[2]), std::stod(row[3]), std::stoull(row[4]),
                   std::stoull(row[5])});
  }
  return out;
}

}  // namespace ikd::bench

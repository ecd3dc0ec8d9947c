#include "ikd/bench/harness.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace ikd::bench {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t to_count(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw std::invalid_argument("config: '" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  return out;
}

double to_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: '" + key + "' expects a number, got '" + v + "'");
  }
}

bool to_flag(const std::string& key, const std::string& v) {
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  throw std::invalid_argument("config: '" + key + "' expects on/off, got '" + v + "'");
}

}  // namespace

void WorkloadSpec::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw std::invalid_argument(std::string("workload: ") + name + " must be positive");
  };
  positive(initial_points, "initial_points");
  positive(inserts_per_op, "inserts_per_op");
  positive(queries_per_op, "queries_per_op");
  positive(query_k, "query_k");
  positive(box_delete_every, "box_delete_every");
  positive(boxes_per_delete, "boxes_per_delete");
  positive(bulk_insert_every, "bulk_insert_every");
  positive(bulk_insert_count, "bulk_insert_count");
  positive(gate_every, "gate_every");
  if (!(delete_box_edge > 0)) throw std::invalid_argument("workload: delete_box_edge must be positive");
  for (int i = 0; i < 3; ++i) {
    if (delete_box_edge > workspace.max(i) - workspace.min(i)) {
      throw std::invalid_argument("workload: delete boxes do not fit in the workspace");
    }
  }
  if (downsample && !(*downsample > 0)) throw std::invalid_argument("workload: downsample must be positive");
}

void apply_config_entry(WorkloadSpec& spec, const std::string& key, const std::string& value) {
  if (key == "seed") {
    spec.seed = to_count(key, value);
  } else if (key == "workspace") {
    const double edge = to_real(key, value);
    if (!(edge > 0)) throw std::invalid_argument("config: workspace edge must be positive");
    spec.workspace = BenchBox(BenchBox::Vector::Zero(), BenchBox::Vector::Constant(static_cast<Scalar>(edge)));
  } else if (key == "initial_points") {
    spec.initial_points = to_count(key, value);
  } else if (key == "ops") {
    spec.ops = to_count(key, value);
  } else if (key == "inserts_per_op") {
    spec.inserts_per_op = to_count(key, value);
  } else if (key == "queries_per_op") {
    spec.queries_per_op = to_count(key, value);
  } else if (key == "query_k") {
    spec.query_k = to_count(key, value);
  } else if (key == "box_delete_every") {
    spec.box_delete_every = to_count(key, value);
  } else if (key == "boxes_per_delete") {
    spec.boxes_per_delete = to_count(key, value);
  } else if (key == "delete_box_edge") {
    spec.delete_box_edge = to_real(key, value);
  } else if (key == "bulk_insert_every") {
    spec.bulk_insert_every = to_count(key, value);
  } else if (key == "bulk_insert_count") {
    spec.bulk_insert_count = to_count(key, value);
  } else if (key == "parallel") {
    spec.parallel = to_flag(key, value);
  } else if (key == "downsample") {
    if (value == "off") {
      spec.downsample.reset();
    } else {
      spec.downsample = to_real(key, value);
    }
  } else if (key == "gate_every") {
    spec.gate_every = to_count(key, value);
  } else if (key == "gate_brute_force_queries") {
    spec.gate_brute_force_queries = to_count(key, value);
  } else {
    throw std::invalid_argument("config: unknown key '" + key + "'");
  }
}

void parse_config(WorkloadSpec& spec, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key=value");
    }
    apply_config_entry(spec, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

void load_config(WorkloadSpec& spec, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  parse_config(spec, buf.str());
}

}  // namespace ikd::bench

#include "gmpslab/cli/metrics.hpp"

#include "gmpslab/error.hpp"

#include <json.hpp>

#include <cmath>
#include <limits>
#include <sstream>

namespace gmpslab::cli {

using nlohmann::json;

namespace {

// JSON has no infinities or NaN; they travel as the strings "inf", "-inf", "nan".
json num(double x) {
  if (std::isfinite(x)) return x;
  if (std::isnan(x)) return "nan";
  return x > 0 ? "inf" : "-inf";
}

json nums(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(num(x));
  return a;
}

double get_num(const json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    throw Error(ErrorKind::kSchema, "expected a number, got '" + s + "'");
  }
  return j.get<double>();
}

std::vector<double> get_nums(const json& j) {
  std::vector<double> out;
  for (const auto& x : j) out.push_back(get_num(x));
  return out;
}

json optional_number(const std::optional<double>& v) { return v ? num(*v) : json(nullptr); }

std::optional<double> read_optional(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return get_num(j.at(key));
}

MetricsRecord record_from(const json& j) {
  MetricsRecord r;
  r.run_id = j.at("run_id").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.iteration = j.at("iteration").get<int>();
  r.env_steps = j.at("env_steps").get<std::int64_t>();
  r.pre_return = get_num(j.at("pre_return"));
  r.post_return = read_optional(j, "post_return");
  r.post_step_reward = read_optional(j, "post_step_reward");
  r.post_success = read_optional(j, "post_success");
  r.post_distance = read_optional(j, "post_distance");
  r.bc_loss = get_num(j.at("bc_loss"));
  r.alpha = get_num(j.at("alpha"));
  r.task_ids = j.at("task_ids").get<std::vector<int>>();
  r.task_returns = get_nums(j.at("task_returns"));
  r.wall_clock = get_num(j.at("wall_clock"));
  return r;
}

BoundRecord bound_from(const json& j) {
  BoundRecord b;
  b.run_id = j.at("run_id").get<std::string>();
  b.seed = j.at("seed").get<std::uint64_t>();
  verify::BoundReport& r = b.report;
  r.task_epsilon = get_nums(j.at("task_epsilon"));
  r.epsilon = get_num(j.at("epsilon"));
  r.delta = get_num(j.at("delta"));
  r.horizon = j.at("horizon").get<int>();
  r.j_expert = get_num(j.at("j_expert"));
  r.j_adapted = get_num(j.at("j_adapted"));
  r.task_j_expert = get_nums(j.at("task_j_expert"));
  r.task_j_adapted = get_nums(j.at("task_j_adapted"));
  r.slack = get_num(j.at("slack"));
  r.min_task_slack = get_num(j.at("min_task_slack"));
  r.chain_violation = get_num(j.at("chain_violation"));
  r.verdict = j.at("verdict").get<bool>();
  return b;
}

}  // namespace

std::string to_line(const MetricsRecord& r) {
  json j;
  j["schema"] = kMetricsSchema;
  j["kind"] = "iteration";
  j["run_id"] = r.run_id;
  j["seed"] = r.seed;
  j["iteration"] = r.iteration;
  j["env_steps"] = r.env_steps;
  j["pre_return"] = num(r.pre_return);
  j["post_return"] = optional_number(r.post_return);
  j["post_step_reward"] = optional_number(r.post_step_reward);
  j["post_success"] = optional_number(r.post_success);
  j["post_distance"] = optional_number(r.post_distance);
  j["bc_loss"] = num(r.bc_loss);
  j["alpha"] = num(r.alpha);
  j["task_ids"] = r.task_ids;
  j["task_returns"] = nums(r.task_returns);
  j["wall_clock"] = num(r.wall_clock);
  return j.dump();
}

std::string to_line(const BoundRecord& b) {
  const verify::BoundReport& r = b.report;
  json j;
  j["schema"] = kMetricsSchema;
  j["kind"] = "bound";
  j["run_id"] = b.run_id;
  j["seed"] = b.seed;
  j["task_epsilon"] = nums(r.task_epsilon);
  j["epsilon"] = num(r.epsilon);
  j["delta"] = num(r.delta);
  j["horizon"] = r.horizon;
  j["j_expert"] = num(r.j_expert);
  j["j_adapted"] = num(r.j_adapted);
  j["task_j_expert"] = nums(r.task_j_expert);
  j["task_j_adapted"] = nums(r.task_j_adapted);
  j["slack"] = num(r.slack);
  j["min_task_slack"] = num(r.min_task_slack);
  j["chain_violation"] = num(r.chain_violation);
  j["verdict"] = r.verdict;
  return j.dump();
}

MetricsWriter::MetricsWriter(const std::filesystem::path& path) : path_(path), out_(path, std::ios::trunc) {
  if (!out_) throw Error(ErrorKind::kIo, "cannot write metrics file " + path.string());
}

void MetricsWriter::put(const std::string& line) {
  out_ << line << '\n';
  out_.flush();
  if (!out_) throw Error(ErrorKind::kIo, "write failed on " + path_.string());
}

void MetricsWriter::write(const MetricsRecord& r) { put(to_line(r)); }
void MetricsWriter::write(const BoundRecord& r) { put(to_line(r)); }

MetricsFile read_metrics(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot read metrics file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();

  MetricsFile out;
  std::size_t pos = 0;
  int line_no = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const bool last = nl == std::string::npos;
    const std::string line = text.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
    pos = nl == std::string::npos ? text.size() : nl + 1;
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path.string() + " line " + std::to_string(line_no);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error&) {
      if (last) {
        out.truncated = where + ": incomplete record";
        break;
      }
      throw Error(ErrorKind::kParse, where + ": malformed record");
    }
    if (nl == std::string::npos) {
      // Parsable, but the writer always ends a record with a newline.
      out.truncated = where + ": record not terminated";
    }
    if (!j.is_object() || !j.contains("schema") || j.at("schema") != kMetricsSchema) {
      throw Error(ErrorKind::kSchema, where + ": unsupported metrics schema");
    }
    try {
      const std::string kind = j.value("kind", "");
      if (kind == "iteration") {
        out.records.push_back(record_from(j));
      } else if (kind == "bound") {
        out.bounds.push_back(bound_from(j));
      } else {
        throw Error(ErrorKind::kSchema, where + ": unknown record kind '" + kind + "'");
      }
    } catch (const json::exception& e) {
      throw Error(ErrorKind::kSchema, where + ": " + e.what());
    }
  }
  return out;
}

}  // namespace gmpslab::cli

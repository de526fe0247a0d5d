#pragma once

#include "gmpslab/verify/verify.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace gmpslab::cli {

inline constexpr int kMetricsSchema = 1;

/// One meta-iteration of one run. The post-update fields are present on
/// iterations that were evaluated on the held-out tasks.
struct MetricsRecord {
  std::string run_id;
  std::uint64_t seed = 0;
  int iteration = 0;
  std::int64_t env_steps = 0;
  double pre_return = 0.0;
  std::optional<double> post_return;
  std::optional<double> post_step_reward;
  std::optional<double> post_success;
  std::optional<double> post_distance;
  double bc_loss = 0.0;
  double alpha = 0.0;
  std::vector<int> task_ids;
  std::vector<double> task_returns;
  double wall_clock = 0.0;

  friend bool operator==(const MetricsRecord&, const MetricsRecord&) = default;
};

struct BoundRecord {
  std::string run_id;
  std::uint64_t seed = 0;
  verify::BoundReport report;
};

std::string to_line(const MetricsRecord& r);
std::string to_line(const BoundRecord& r);

/// Appends records to a line-delimited file, one flushed line per record.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::filesystem::path& path);
  void write(const MetricsRecord& r);
  void write(const BoundRecord& r);

 private:
  void put(const std::string& line);

  std::filesystem::path path_;
  std::ofstream out_;
};

struct MetricsFile {
  std::vector<MetricsRecord> records;
  std::vector<BoundRecord> bounds;
  /// Set when the last line is incomplete; the records before it are kept.
  std::optional<std::string> truncated;
};

/// Throws kParse naming the line for a malformed line other than the last,
/// kSchema for an unknown schema or record kind, kIo when unreadable.
MetricsFile read_metrics(const std::filesystem::path& path);

}  // namespace gmpslab::cli

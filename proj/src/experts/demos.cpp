#include "gmpslab/experts/demos.hpp"

#include "gmpslab/error.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <string>

namespace gmpslab::experts {

using nlohmann::json;

namespace {

void check_finite(const inner::Trajectory& tr, const Eigen::VectorXd& context) {
  tr.validate();
  if (!context.allFinite()) throw Error(ErrorKind::kNonFinite, "demonstration context is not finite");
}

json columns(const Eigen::MatrixXd& m) {
  json out = json::array();
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    json col = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) col.push_back(m(i, j));
    out.push_back(std::move(col));
  }
  return out;
}

json values(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

struct LineReader {
  std::size_t line;

  [[noreturn]] void fail(ErrorKind kind, const std::string& what) const {
    throw Error(kind, "demo file line " + std::to_string(line) + ": " + what);
  }

  double number(const json& j, const char* field) const {
    if (j.is_null()) fail(ErrorKind::kNonFinite, std::string("non-finite value in ") + field);
    if (!j.is_number()) fail(ErrorKind::kSchema, std::string("expected a number in ") + field);
    const double v = j.get<double>();
    if (!std::isfinite(v)) fail(ErrorKind::kNonFinite, std::string("non-finite value in ") + field);
    return v;
  }

  const json& field(const json& obj, const char* name) const {
    auto it = obj.find(name);
    if (it == obj.end()) fail(ErrorKind::kSchema, std::string("missing field ") + name);
    return *it;
  }

  Eigen::VectorXd vector(const json& j, const char* name) const {
    if (!j.is_array()) fail(ErrorKind::kSchema, std::string(name) + " must be an array");
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = number(j[i], name);
    return v;
  }

  Eigen::MatrixXd matrix(const json& j, const char* name) const {
    if (!j.is_array()) fail(ErrorKind::kSchema, std::string(name) + " must be an array of arrays");
    Eigen::MatrixXd m;
    for (std::size_t c = 0; c < j.size(); ++c) {
      const Eigen::VectorXd col = vector(j[c], name);
      if (c == 0) m.resize(col.size(), static_cast<Eigen::Index>(j.size()));
      if (col.size() != m.rows()) fail(ErrorKind::kShapeMismatch, std::string("ragged rows in ") + name);
      m.col(static_cast<Eigen::Index>(c)) = col;
    }
    return m;
  }
};

}  // namespace

void DemoSet::append(const inner::Trajectory& labelled, const Eigen::VectorXd& context) {
  check_finite(labelled, context);
  auto [it, fresh] = tasks_.try_emplace(labelled.task_id);
  TaskDemos& td = it->second;
  if (fresh) {
    td.task_id = labelled.task_id;
    td.context = context;
    td.states.resize(labelled.states.rows(), 0);
    td.actions.resize(labelled.actions.rows(), 0);
  } else if (td.context != context) {
    throw Error(ErrorKind::kInvalidArgument, "task " + std::to_string(labelled.task_id) + " changed context");
  }
  if (labelled.states.rows() != td.states.rows() || labelled.actions.rows() != td.actions.rows()) {
    throw Error(ErrorKind::kShapeMismatch, "demonstration dimensions differ within task " + std::to_string(td.task_id));
  }
  const auto n = labelled.steps();
  const auto old = td.states.cols();
  td.states.conservativeResize(Eigen::NoChange, old + n);
  td.actions.conservativeResize(Eigen::NoChange, old + n);
  td.states.rightCols(n) = labelled.states.leftCols(n);
  td.actions.rightCols(n) = labelled.actions;
  td.trajectories.push_back(labelled);
}

void DemoSet::append(const inner::Batch& labelled, const Eigen::VectorXd& context) {
  for (const auto& tr : labelled) append(tr, context);
}

const TaskDemos& DemoSet::task(int task_id) const {
  auto it = tasks_.find(task_id);
  if (it == tasks_.end() || it->second.pairs() == 0) {
    throw Error(ErrorKind::kMissingData, "no demonstrations for task " + std::to_string(task_id));
  }
  return it->second;
}

std::vector<int> DemoSet::task_ids() const {
  std::vector<int> ids;
  for (const auto& [id, td] : tasks_) ids.push_back(id);
  return ids;
}

bool operator==(const DemoSet& a, const DemoSet& b) {
  if (a.tasks_.size() != b.tasks_.size()) return false;
  for (const auto& [id, ta] : a.tasks_) {
    auto it = b.tasks_.find(id);
    if (it == b.tasks_.end()) return false;
    const TaskDemos& tb = it->second;
    if (ta.context != tb.context || ta.trajectories.size() != tb.trajectories.size()) return false;
    for (std::size_t i = 0; i < ta.trajectories.size(); ++i) {
      const auto& x = ta.trajectories[i];
      const auto& y = tb.trajectories[i];
      if (x.states != y.states || x.actions != y.actions || x.rewards != y.rewards) return false;
    }
  }
  return true;
}

void write_demos(const std::filesystem::path& path, const DemoSet& demos) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  for (int id : demos.task_ids()) {
    const TaskDemos& td = demos.task(id);
    for (const auto& tr : td.trajectories) {
      check_finite(tr, td.context);
      json rec;
      rec["schema_version"] = kDemoSchemaVersion;
      rec["task_id"] = id;
      rec["context"] = values(td.context);
      rec["states"] = columns(tr.states);
      rec["actions"] = columns(tr.actions);
      rec["rewards"] = values(tr.rewards.transpose());
      out << rec.dump() << '\n';
    }
  }
  if (!out) throw Error(ErrorKind::kIo, "write to " + path.string() + " failed");
}

DemoSet read_demos(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot read " + path.string());
  DemoSet demos;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.empty()) continue;
    LineReader rd{line};
    json rec;
    try {
      rec = json::parse(text);
    } catch (const json::parse_error& e) {
      rd.fail(ErrorKind::kParse, std::string("malformed or truncated record (") + e.what() + ")");
    }
    if (!rec.is_object()) rd.fail(ErrorKind::kSchema, "record is not an object");
    const json& ver = rd.field(rec, "schema_version");
    if (!ver.is_number_integer() || ver.get<int>() != kDemoSchemaVersion) {
      rd.fail(ErrorKind::kSchema, "unsupported schema_version " + ver.dump());
    }
    const json& tid = rd.field(rec, "task_id");
    if (!tid.is_number_integer()) rd.fail(ErrorKind::kSchema, "task_id must be an integer");
    inner::Trajectory tr;
    tr.task_id = tid.get<int>();
    tr.states = rd.matrix(rd.field(rec, "states"), "states");
    tr.actions = rd.matrix(rd.field(rec, "actions"), "actions");
    tr.rewards = rd.vector(rd.field(rec, "rewards"), "rewards").transpose();
    const Eigen::VectorXd ctx = rd.vector(rd.field(rec, "context"), "context");
    if (tr.states.cols() != tr.actions.cols() + 1 || tr.rewards.size() != tr.actions.cols()) {
      rd.fail(ErrorKind::kShapeMismatch, "states, actions and rewards have inconsistent lengths");
    }
    try {
      demos.append(tr, ctx);
    } catch (const Error& e) {
      rd.fail(e.kind(), e.what());
    }
  }
  return demos;
}

}  // namespace gmpslab::experts

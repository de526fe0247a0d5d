#include "gmpslab/diff/param_vector.hpp"

#include "gmpslab/error.hpp"

#include <utility>

namespace gmpslab::diff {

Eigen::Index Layout::add(std::string name, Eigen::Index rows, Eigen::Index cols) {
  if (rows <= 0 || cols <= 0) {
    throw Error(ErrorKind::kShapeMismatch, "layout block '" + name + "' has an empty shape");
  }
  if (contains(name)) {
    throw Error(ErrorKind::kInvalidArgument, "duplicate layout block '" + name + "'");
  }
  const Eigen::Index offset = size_;
  blocks_.push_back(Block{std::move(name), rows, cols, offset});
  size_ += rows * cols;
  return offset;
}

const Block& Layout::find(std::string_view name) const {
  for (const auto& b : blocks_) {
    if (b.name == name) return b;
  }
  throw Error(ErrorKind::kInvalidArgument, "no layout block named '" + std::string(name) + "'");
}

bool Layout::contains(std::string_view name) const {
  for (const auto& b : blocks_) {
    if (b.name == name) return true;
  }
  return false;
}

bool operator==(const Layout& a, const Layout& b) {
  if (a.size_ != b.size_ || a.blocks_.size() != b.blocks_.size()) return false;
  for (std::size_t i = 0; i < a.blocks_.size(); ++i) {
    const auto& x = a.blocks_[i];
    const auto& y = b.blocks_[i];
    if (x.name != y.name || x.rows != y.rows || x.cols != y.cols || x.offset != y.offset) return false;
  }
  return true;
}

ParamVector::ParamVector(Layout layout, Eigen::VectorXd values)
    : layout_(std::move(layout)), values_(std::move(values)), mask_(Mask::Constant(values_.size(), true)) {
  validate();
}

ParamVector::ParamVector(Layout layout, Eigen::VectorXd values, Mask mask)
    : layout_(std::move(layout)), values_(std::move(values)), mask_(std::move(mask)) {
  validate();
}

ParamVector ParamVector::zeros(Layout layout) {
  const auto n = layout.size();
  return ParamVector(std::move(layout), Eigen::VectorXd::Zero(n));
}

Eigen::Map<const Eigen::MatrixXd> ParamVector::block(std::string_view name) const {
  const auto& b = layout_.find(name);
  return {values_.data() + b.offset, b.rows, b.cols};
}

ParamVector ParamVector::with_values(Eigen::VectorXd values) const {
  return ParamVector(layout_, std::move(values), mask_);
}

ParamVector ParamVector::with_mask(Mask mask) const { return ParamVector(layout_, values_, std::move(mask)); }

ParamVector ParamVector::with_block_mask(std::string_view name, bool adapt) const {
  const auto& b = layout_.find(name);
  Mask m = mask_;
  m.segment(b.offset, b.size()).setConstant(adapt);
  return with_mask(std::move(m));
}

void ParamVector::validate() const {
  if (layout_.size() != values_.size()) {
    throw Error(ErrorKind::kShapeMismatch, "layout covers " + std::to_string(layout_.size()) +
                                               " entries but the vector has " + std::to_string(values_.size()));
  }
  if (mask_.size() != values_.size()) {
    throw Error(ErrorKind::kShapeMismatch, "mask length " + std::to_string(mask_.size()) +
                                               " differs from vector length " + std::to_string(values_.size()));
  }
}

}  // namespace gmpslab::diff

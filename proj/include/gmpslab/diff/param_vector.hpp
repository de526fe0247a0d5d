#pragma once

#include <Eigen/Dense>
#include <string>
#include <string_view>
#include <vector>

namespace gmpslab::diff {

/// A named, column-major matrix stored contiguously inside a flat vector.
struct Block {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  Eigen::Index offset = 0;

  Eigen::Index size() const { return rows * cols; }
};

class Layout {
 public:
  Layout() = default;

  /// Appends a block after the last one and returns its offset.
  Eigen::Index add(std::string name, Eigen::Index rows, Eigen::Index cols);

  const std::vector<Block>& blocks() const { return blocks_; }
  const Block& find(std::string_view name) const;
  bool contains(std::string_view name) const;
  Eigen::Index size() const { return size_; }

  friend bool operator==(const Layout&, const Layout&);

 private:
  std::vector<Block> blocks_;
  Eigen::Index size_ = 0;
};

using Mask = Eigen::Array<bool, Eigen::Dynamic, 1>;

/// Flat policy parameters plus the layout that gives them shape and the
/// per-entry adaptation mask consulted by inner-loop updates.
///
/// Values are never modified in place; updates go through with_values().
class ParamVector {
 public:
  ParamVector() = default;
  ParamVector(Layout layout, Eigen::VectorXd values);
  ParamVector(Layout layout, Eigen::VectorXd values, Mask mask);

  static ParamVector zeros(Layout layout);

  const Layout& layout() const { return layout_; }
  const Eigen::VectorXd& values() const { return values_; }
  const Mask& mask() const { return mask_; }
  Eigen::Index size() const { return values_.size(); }

  /// Mask as 0/1 reals, ready to multiply a gradient.
  Eigen::VectorXd mask_weights() const { return mask_.cast<double>(); }

  Eigen::Map<const Eigen::MatrixXd> block(std::string_view name) const;

  ParamVector with_values(Eigen::VectorXd values) const;
  ParamVector with_mask(Mask mask) const;
  /// Freezes (or unfreezes) every entry of the named block.
  ParamVector with_block_mask(std::string_view name, bool adapt) const;

 private:
  void validate() const;

  Layout layout_;
  Eigen::VectorXd values_;
  Mask mask_;
};

}  // namespace gmpslab::diff

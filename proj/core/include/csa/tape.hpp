// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <deque>
#include <limits>
#include <stdexcept>
#include <vector>

#include "csa/kernels.hpp"
#include "csa/matrix.hpp"

namespace csa {

/// Raised when an adjoint pass is requested on something the tape never
/// recorded.
class TapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Handle to a value recorded on a Tape.
struct Var {
  static constexpr std::uint32_t kInvalid = std::numeric_limits<std::uint32_t>::max();
  std::uint32_t index = kInvalid;
  bool valid() const noexcept { return index != kInvalid; }
};

/// Reverse-mode recorder over the dense kernels. Each recorded op keeps what
/// its adjoint rule needs; backward() walks the records in reverse and
/// accumulates gradients into every reachable node.
///
/// A tape is single-threaded. Leaves created with constant() or
/// parameter() reference external storage that must outlive the tape.
template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) noexcept = default;
  Tape& operator=(Tape&&) noexcept = default;

  /// Owned leaf that receives a gradient.
  Var input(Matrix<T> value);
  /// Borrowed leaf that receives a gradient (model parameters).
  Var parameter(const Matrix<T>& value);
  /// Borrowed leaf that never receives a gradient.
  Var constant(const Matrix<T>& value);

  Var matmul(Var a, Var b);
  /// a * b^T
  Var matmul_bt(Var a, Var b);
  Var add(Var a, Var b);
  /// a + broadcast(row), row is 1 x cols.
  Var add_row(Var a, Var row);
  Var scale(Var a, T factor);
  Var softmax_rows(Var a);
  Var layer_norm_rows(Var a, Var gain, Var bias, T eps = static_cast<T>(kLayerNormEps));
  Var gelu(Var a);
  Var l2_normalize_rows(Var a);
  /// Adds `penalty` to every column c with key_valid[c] == false.
  Var mask_columns(Var a, const std::vector<bool>& key_valid, T penalty);
  /// Horizontal concatenation.
  Var concat_cols(const std::vector<Var>& parts);
  /// Sum of all elements as a 1 x 1 value.
  Var sum(Var a);

  /// References from value() and grad() stay valid while the tape grows.
  const Matrix<T>& value(Var v) const;
  /// Gradient accumulated by the last backward(); an empty matrix when the
  /// node was not reached.
  const Matrix<T>& grad(Var v) const;

  /// Seeds d(loss)/d(out) = seed and propagates to all reachable nodes.
  void backward(Var out, const Matrix<T>& seed);
  /// Multi-output form; seeds are summed where they target the same node.
  void backward(const std::vector<std::pair<Var, const Matrix<T>*>>& seeds);
  /// Scalar-output form: seed of 1 on a 1 x 1 node.
  void backward(Var scalar_out);

  std::size_t size() const noexcept { return nodes_.size(); }
  bool empty() const noexcept { return nodes_.empty(); }

 private:
  enum class Op : std::uint8_t {
    kLeaf,
    kMatMul,
    kMatMulBt,
    kAdd,
    kAddRow,
    kScale,
    kSoftmax,
    kLayerNorm,
    kGelu,
    kL2Normalize,
    kMaskColumns,
    kConcatCols,
    kSum,
  };

  struct Node {
    Op op = Op::kLeaf;
    bool needs_grad = false;
    Matrix<T> owned;
    const Matrix<T>* borrowed = nullptr;
    Matrix<T> grad;
    std::vector<std::uint32_t> inputs;
    T scalar{0};
    LayerNormCache<T> ln;

    const Matrix<T>& value() const { return borrowed != nullptr ? *borrowed : owned; }
  };

  const Node& node(Var v) const;
  Var push(Op op, Matrix<T> value, std::vector<std::uint32_t> inputs);
  void accumulate(std::uint32_t index, const Matrix<T>& g);
  void accumulate_product(std::uint32_t index, const Matrix<T>& a, const Matrix<T>& b,
                          int form);
  void propagate(std::uint32_t index);

  std::deque<Node> nodes_;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace csa

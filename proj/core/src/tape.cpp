// SPDX-License-Identifier: Apache-2.0
#include "csa/tape.hpp"

#include <string>

namespace csa {

template <typename T>
const typename Tape<T>::Node& Tape<T>::node(Var v) const {
  if (!v.valid() || v.index >= nodes_.size()) {
    throw TapeError("tape: variable " + std::to_string(v.index) + " was not recorded on this tape");
  }
  return nodes_[v.index];
}

template <typename T>
Var Tape<T>::push(Op op, Matrix<T> value, std::vector<std::uint32_t> inputs) {
  Node n;
  n.op = op;
  n.owned = std::move(value);
  for (auto i : inputs) n.needs_grad = n.needs_grad || nodes_[i].needs_grad;
  n.inputs = std::move(inputs);
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
Var Tape<T>::input(Matrix<T> value) {
  Node n;
  n.owned = std::move(value);
  n.needs_grad = true;
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
Var Tape<T>::parameter(const Matrix<T>& value) {
  Node n;
  n.borrowed = &value;
  n.needs_grad = true;
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
Var Tape<T>::constant(const Matrix<T>& value) {
  Node n;
  n.borrowed = &value;
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
Var Tape<T>::matmul(Var a, Var b) {
  return push(Op::kMatMul, csa::matmul(value(a), value(b)), {a.index, b.index});
}

template <typename T>
Var Tape<T>::matmul_bt(Var a, Var b) {
  return push(Op::kMatMulBt, csa::matmul_bt(value(a), value(b)), {a.index, b.index});
}

template <typename T>
Var Tape<T>::add(Var a, Var b) {
  return push(Op::kAdd, csa::add(value(a), value(b)), {a.index, b.index});
}

template <typename T>
Var Tape<T>::add_row(Var a, Var row) {
  return push(Op::kAddRow, add_row_vector(value(a), value(row)), {a.index, row.index});
}

template <typename T>
Var Tape<T>::scale(Var a, T factor) {
  Var out = push(Op::kScale, csa::scale(value(a), factor), {a.index});
  nodes_[out.index].scalar = factor;
  return out;
}

template <typename T>
Var Tape<T>::softmax_rows(Var a) {
  return push(Op::kSoftmax, csa::softmax_rows(value(a)), {a.index});
}

template <typename T>
Var Tape<T>::layer_norm_rows(Var a, Var gain, Var bias, T eps) {
  LayerNormCache<T> cache;
  Matrix<T> y = csa::layer_norm_rows(value(a), value(gain), value(bias), eps, &cache);
  Var out = push(Op::kLayerNorm, std::move(y), {a.index, gain.index, bias.index});
  nodes_[out.index].ln = std::move(cache);
  return out;
}

template <typename T>
Var Tape<T>::gelu(Var a) {
  return push(Op::kGelu, csa::gelu(value(a)), {a.index});
}

template <typename T>
Var Tape<T>::l2_normalize_rows(Var a) {
  return push(Op::kL2Normalize, csa::l2_normalize_rows(value(a)), {a.index});
}

template <typename T>
Var Tape<T>::mask_columns(Var a, const std::vector<bool>& key_valid, T penalty) {
  const Matrix<T>& x = value(a);
  if (key_valid.size() != x.cols()) {
    throw ShapeError("mask_columns: mask length " + std::to_string(key_valid.size()) +
                     " vs " + x.shape());
  }
  Matrix<T> y = x;
  for (std::size_t r = 0; r < y.rows(); ++r) {
    auto row = y.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (!key_valid[c]) row[c] += penalty;
    }
  }
  return push(Op::kMaskColumns, std::move(y), {a.index});
}

template <typename T>
Var Tape<T>::concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t rows = value(parts.front()).rows();
  std::size_t cols = 0;
  std::vector<std::uint32_t> inputs;
  for (Var p : parts) {
    const Matrix<T>& m = value(p);
    if (m.rows() != rows) {
      throw ShapeError("concat_cols: row mismatch " + value(parts.front()).shape() + " vs " +
                       m.shape());
    }
    cols += m.cols();
    inputs.push_back(p.index);
  }
  Matrix<T> y(rows, cols);
  std::size_t offset = 0;
  for (Var p : parts) {
    const Matrix<T>& m = value(p);
    for (std::size_t r = 0; r < rows; ++r) {
      auto src = m.row(r);
      std::copy(src.begin(), src.end(), y.row(r).begin() + static_cast<std::ptrdiff_t>(offset));
    }
    offset += m.cols();
  }
  return push(Op::kConcatCols, std::move(y), std::move(inputs));
}

template <typename T>
Var Tape<T>::sum(Var a) {
  T s{0};
  for (T v : value(a).values()) s += v;
  return push(Op::kSum, Matrix<T>(1, 1, s), {a.index});
}

template <typename T>
const Matrix<T>& Tape<T>::value(Var v) const {
  return node(v).value();
}

template <typename T>
const Matrix<T>& Tape<T>::grad(Var v) const {
  return node(v).grad;
}

template <typename T>
void Tape<T>::accumulate(std::uint32_t index, const Matrix<T>& g) {
  Node& n = nodes_[index];
  if (!n.needs_grad) return;
  if (n.grad.empty()) {
    n.grad = g;
  } else {
    add_inplace(n.grad, g);
  }
}

// form 0: a * b, form 1: a * b^T, form 2: a^T * b
template <typename T>
void Tape<T>::accumulate_product(std::uint32_t index, const Matrix<T>& a, const Matrix<T>& b,
                                 int form) {
  Node& n = nodes_[index];
  if (!n.needs_grad) return;
  const Matrix<T>& v = n.value();
  if (n.grad.empty()) n.grad = Matrix<T>(v.rows(), v.cols());
  switch (form) {
    case 0: matmul_accumulate(a, b, n.grad); break;
    case 1: matmul_bt_accumulate(a, b, n.grad); break;
    default: matmul_at_accumulate(a, b, n.grad); break;
  }
}

template <typename T>
void Tape<T>::propagate(std::uint32_t index) {
  Node& n = nodes_[index];
  const Matrix<T>& dy = n.grad;
  const auto& in = n.inputs;
  switch (n.op) {
    case Op::kLeaf:
      break;
    case Op::kMatMul:
      accumulate_product(in[0], dy, nodes_[in[1]].value(), 1);
      accumulate_product(in[1], nodes_[in[0]].value(), dy, 2);
      break;
    case Op::kMatMulBt:
      accumulate_product(in[0], dy, nodes_[in[1]].value(), 0);
      accumulate_product(in[1], dy, nodes_[in[0]].value(), 2);
      break;
    case Op::kAdd:
      accumulate(in[0], dy);
      accumulate(in[1], dy);
      break;
    case Op::kAddRow:
      accumulate(in[0], dy);
      if (nodes_[in[1]].needs_grad) accumulate(in[1], column_sums(dy));
      break;
    case Op::kScale:
      if (nodes_[in[0]].needs_grad) accumulate(in[0], csa::scale(dy, n.scalar));
      break;
    case Op::kSoftmax:
      if (nodes_[in[0]].needs_grad) accumulate(in[0], softmax_rows_backward(n.owned, dy));
      break;
    case Op::kLayerNorm: {
      auto g = layer_norm_rows_backward(n.ln, nodes_[in[1]].value(), dy);
      accumulate(in[0], g.input);
      accumulate(in[1], g.gain);
      accumulate(in[2], g.bias);
      break;
    }
    case Op::kGelu:
      if (nodes_[in[0]].needs_grad) accumulate(in[0], gelu_backward(nodes_[in[0]].value(), dy));
      break;
    case Op::kL2Normalize:
      if (nodes_[in[0]].needs_grad) {
        accumulate(in[0], l2_normalize_rows_backward(nodes_[in[0]].value(), dy));
      }
      break;
    case Op::kMaskColumns:
      accumulate(in[0], dy);
      break;
    case Op::kConcatCols: {
      std::size_t offset = 0;
      for (auto i : in) {
        const std::size_t cols = nodes_[i].value().cols();
        if (nodes_[i].needs_grad) {
          Matrix<T> part(dy.rows(), cols);
          for (std::size_t r = 0; r < dy.rows(); ++r) {
            auto src = dy.row(r).subspan(offset, cols);
            std::copy(src.begin(), src.end(), part.row(r).begin());
          }
          accumulate(i, part);
        }
        offset += cols;
      }
      break;
    }
    case Op::kSum: {
      const Matrix<T>& x = nodes_[in[0]].value();
      accumulate(in[0], Matrix<T>(x.rows(), x.cols(), dy[0]));
      break;
    }
  }
}

template <typename T>
void Tape<T>::backward(const std::vector<std::pair<Var, const Matrix<T>*>>& seeds) {
  if (nodes_.empty()) throw TapeError("tape: backward on an empty tape");
  if (seeds.empty()) throw TapeError("tape: backward without seeds");
  for (auto& n : nodes_) n.grad = Matrix<T>();
  std::uint32_t last = 0;
  for (const auto& [var, seed] : seeds) {
    const Node& n = node(var);
    if (!n.value().same_shape(*seed)) {
      throw ShapeError("tape: seed " + seed->shape() + " vs output " + n.value().shape());
    }
    accumulate(var.index, *seed);
    last = std::max(last, var.index);
  }
  for (std::uint32_t i = last + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.op == Op::kLeaf || n.grad.empty() || !n.needs_grad) continue;
    propagate(i);
  }
}

template <typename T>
void Tape<T>::backward(Var out, const Matrix<T>& seed) {
  std::vector<std::pair<Var, const Matrix<T>*>> seeds;
  seeds.emplace_back(out, &seed);
  backward(seeds);
}

template <typename T>
void Tape<T>::backward(Var scalar_out) {
  const Matrix<T>& v = node(scalar_out).value();
  if (v.rows() != 1 || v.cols() != 1) {
    throw ShapeError("tape: scalar backward on non-scalar " + v.shape());
  }
  const Matrix<T> one(1, 1, T{1});
  backward(scalar_out, one);
}

template class Tape<float>;
template class Tape<double>;

}  // namespace csa

#include "hiermatch/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unordered_set>

namespace hiermatch {

namespace detail {

namespace {

std::uint64_t next_node_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

}  // namespace

std::shared_ptr<TensorNode> make_leaf(std::size_t rows, std::size_t cols,
                                      std::vector<double> values,
                                      bool requires_grad) {
  if (rows == 0 || cols == 0) throw ShapeError("tensor dimensions must be positive");
  if (values.size() != rows * cols)
    throw ShapeError("value count does not match shape " + std::to_string(rows) +
                     "x" + std::to_string(cols));
  auto n = std::make_shared<TensorNode>();
  n->id = next_node_id();
  n->rows = rows;
  n->cols = cols;
  n->shape = {rows, cols};
  n->values = std::move(values);
  n->requires_grad = requires_grad;
  n->is_leaf = true;
  if (requires_grad) n->ensure_grad();
  return n;
}

namespace {

std::shared_ptr<TensorNode> make_op(
    std::size_t rows, std::size_t cols, const char* op_name,
    std::vector<std::shared_ptr<TensorNode>> parents) {
  auto n = std::make_shared<TensorNode>();
  n->id = next_node_id();
  n->rows = rows;
  n->cols = cols;
  n->shape = {rows, cols};
  n->values.assign(rows * cols, 0.0);
  n->is_leaf = false;
  n->op_name = op_name;
  bool needs_grad = false;
  for (const auto& p : parents) needs_grad = needs_grad || p->requires_grad;
  n->requires_grad = needs_grad;
  n->parents = std::move(parents);
  return n;
}

}  // namespace

}  // namespace detail

using detail::TensorNode;

Tensor Tensor::zeros(std::size_t rows, std::size_t cols, bool requires_grad) {
  return Tensor(detail::make_leaf(rows, cols,
                                  std::vector<double>(rows * cols, 0.0),
                                  requires_grad));
}

Tensor Tensor::from_values(std::size_t rows, std::size_t cols,
                           std::vector<double> values, bool requires_grad) {
  return Tensor(detail::make_leaf(rows, cols, std::move(values), requires_grad));
}

Tensor Tensor::row_vector(std::vector<double> values, bool requires_grad) {
  const std::size_t n = values.size();
  return Tensor(detail::make_leaf(1, n, std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(detail::make_leaf(1, 1, {value}, requires_grad));
}

TensorNode& Tensor::node() const {
  if (!node_) throw std::logic_error("use of an undefined Tensor");
  return *node_;
}

std::span<double> Tensor::mutable_values() {
  auto& n = node();
  if (!n.is_leaf)
    throw std::logic_error("mutable_values is restricted to leaf tensors");
  return n.values;
}

double Tensor::value(std::size_t r, std::size_t c) const {
  const auto& n = node();
  if (r >= n.rows || c >= n.cols) throw ShapeError("element index out of range");
  return n.values[r * n.cols + c];
}

double Tensor::item() const {
  const auto& n = node();
  if (n.values.size() != 1) throw ShapeError("item() requires a 1x1 tensor");
  return n.values[0];
}

void Tensor::zero_grad() {
  auto& n = node();
  n.grad.assign(n.values.size(), 0.0);
}

namespace {

// Iterative post-order DFS; children (parents in graph terms) first.
std::vector<TensorNode*> topo_order(TensorNode* root) {
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> visited;
  std::vector<std::pair<TensorNode*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next_child] = stack.back();
    if (next_child < node->parents.size()) {
      TensorNode* child = node->parents[next_child].get();
      ++next_child;
      if (visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

}  // namespace

ComputationRecord record_computation(const Tensor& output) {
  ComputationRecord record;
  for (TensorNode* n : topo_order(&output.node())) {
    ComputationRecord::OpEntry entry;
    entry.node_id = n->id;
    entry.op_name = n->op_name;
    entry.input_ids.reserve(n->parents.size());
    for (const auto& p : n->parents) entry.input_ids.push_back(p->id);
    record.ops.push_back(std::move(entry));
  }
  return record;
}

void backward(const Tensor& loss) {
  TensorNode& root = loss.node();
  if (root.values.size() != 1)
    throw ShapeError("backward requires a scalar (1x1) loss tensor");
  if (!root.requires_grad) return;
  std::vector<TensorNode*> order = topo_order(&root);
  root.ensure_grad();
  root.grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backprop && n->requires_grad && !n->grad.empty()) n->backprop(*n);
  }
}

// ---- op helpers ----

namespace {

using detail::make_op;

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                     " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul: inner dimensions disagree, " +
                     std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                     " * " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  auto out = make_op(m, n, "matmul", {a.node_ptr(), b.node_ptr()});
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& ov = out->values;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double aik = av[i * k + kk];
      for (std::size_t j = 0; j < n; ++j) ov[i * n + j] += aik * bv[kk * n + j];
    }
  if (out->requires_grad)
    out->backprop = [m, k, n](TensorNode& self) {
      auto& A = *self.parents[0];
      auto& B = *self.parents[1];
      const auto& g = self.grad;
      if (A.requires_grad) {
        A.ensure_grad();
        // dA = dC * B^T
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t kk = 0; kk < k; ++kk) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j)
              acc += g[i * n + j] * B.values[kk * n + j];
            A.grad[i * k + kk] += acc;
          }
      }
      if (B.requires_grad) {
        B.ensure_grad();
        // dB = A^T * dC
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t kk = 0; kk < k; ++kk) {
            const double aik = A.values[i * k + kk];
            for (std::size_t j = 0; j < n; ++j)
              B.grad[kk * n + j] += aik * g[i * n + j];
          }
      }
    };
  return Tensor(out);
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols())
    throw ShapeError("matmul_nt: inner dimensions disagree, " +
                     std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                     " * (" + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()) + ")^T");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  auto out = make_op(m, n, "matmul_nt", {a.node_ptr(), b.node_ptr()});
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& ov = out->values;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t kk = 0; kk < k; ++kk)
        acc += av[i * k + kk] * bv[j * k + kk];
      ov[i * n + j] = acc;
    }
  if (out->requires_grad)
    out->backprop = [m, k, n](TensorNode& self) {
      auto& A = *self.parents[0];
      auto& B = *self.parents[1];
      const auto& g = self.grad;
      if (A.requires_grad) {
        A.ensure_grad();
        // dA = dC * B
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) {
            const double gij = g[i * n + j];
            for (std::size_t kk = 0; kk < k; ++kk)
              A.grad[i * k + kk] += gij * B.values[j * k + kk];
          }
      }
      if (B.requires_grad) {
        B.ensure_grad();
        // dB = dC^T * A
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) {
            const double gij = g[i * n + j];
            for (std::size_t kk = 0; kk < k; ++kk)
              B.grad[j * k + kk] += gij * A.values[i * k + kk];
          }
      }
    };
  return Tensor(out);
}

Tensor transpose(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  auto out = make_op(n, m, "transpose", {a.node_ptr()});
  const auto& av = a.values();
  auto& ov = out->values;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) ov[j * m + i] = av[i * n + j];
  if (out->requires_grad)
    out->backprop = [m, n](TensorNode& self) {
      auto& A = *self.parents[0];
      if (!A.requires_grad) return;
      A.ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
          A.grad[i * n + j] += self.grad[j * m + i];
    };
  return Tensor(out);
}

namespace {

template <typename Fwd, typename Bwd>
Tensor binary_elementwise(const Tensor& a, const Tensor& b, const char* name,
                          Fwd fwd, Bwd bwd) {
  check_same_shape(a, b, name);
  auto out = make_op(a.rows(), a.cols(), name, {a.node_ptr(), b.node_ptr()});
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) out->values[i] = fwd(av[i], bv[i]);
  if (out->requires_grad)
    out->backprop = [bwd](TensorNode& self) {
      auto& A = *self.parents[0];
      auto& B = *self.parents[1];
      if (A.requires_grad) A.ensure_grad();
      if (B.requires_grad) B.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        auto [da, db] = bwd(A.values[i], B.values[i], self.grad[i]);
        if (A.requires_grad) A.grad[i] += da;
        if (B.requires_grad) B.grad[i] += db;
      }
    };
  return Tensor(out);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double, double g) { return std::pair{g, g}; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double, double g) { return std::pair{g, -g}; });
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "hadamard", [](double x, double y) { return x * y; },
      [](double x, double y, double g) { return std::pair{g * y, g * x}; });
}

Tensor add_row_bias(const Tensor& m, const Tensor& bias) {
  if (bias.rows() != 1 || bias.cols() != m.cols())
    throw ShapeError("add_row_bias: bias must be 1x" + std::to_string(m.cols()));
  const std::size_t rows = m.rows(), cols = m.cols();
  auto out = make_op(rows, cols, "add_row_bias", {m.node_ptr(), bias.node_ptr()});
  const auto& mv = m.values();
  const auto& bv = bias.values();
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      out->values[i * cols + j] = mv[i * cols + j] + bv[j];
  if (out->requires_grad)
    out->backprop = [rows, cols](TensorNode& self) {
      auto& M = *self.parents[0];
      auto& B = *self.parents[1];
      if (M.requires_grad) {
        M.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
          M.grad[i] += self.grad[i];
      }
      if (B.requires_grad) {
        B.ensure_grad();
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < cols; ++j)
            B.grad[j] += self.grad[i * cols + j];
      }
    };
  return Tensor(out);
}

Tensor scalar_mul(const Tensor& a, double c) {
  auto out = make_op(a.rows(), a.cols(), "scalar_mul", {a.node_ptr()});
  const auto& av = a.values();
  for (std::size_t i = 0; i < av.size(); ++i) out->values[i] = av[i] * c;
  if (out->requires_grad)
    out->backprop = [c](TensorNode& self) {
      auto& A = *self.parents[0];
      if (!A.requires_grad) return;
      A.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        A.grad[i] += c * self.grad[i];
    };
  return Tensor(out);
}

Tensor relu(const Tensor& a) {
  auto out = make_op(a.rows(), a.cols(), "relu", {a.node_ptr()});
  const auto& av = a.values();
  for (std::size_t i = 0; i < av.size(); ++i)
    out->values[i] = av[i] > 0.0 ? av[i] : 0.0;
  if (out->requires_grad)
    out->backprop = [](TensorNode& self) {
      auto& A = *self.parents[0];
      if (!A.requires_grad) return;
      A.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        if (A.values[i] > 0.0) A.grad[i] += self.grad[i];
    };
  return Tensor(out);
}

Tensor sigmoid(const Tensor& a) {
  auto out = make_op(a.rows(), a.cols(), "sigmoid", {a.node_ptr()});
  const auto& av = a.values();
  for (std::size_t i = 0; i < av.size(); ++i)
    out->values[i] = 1.0 / (1.0 + std::exp(-av[i]));
  if (out->requires_grad)
    out->backprop = [](TensorNode& self) {
      auto& A = *self.parents[0];
      if (!A.requires_grad) return;
      A.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        const double y = self.values[i];
        A.grad[i] += self.grad[i] * y * (1.0 - y);
      }
    };
  return Tensor(out);
}

Tensor softmax_rows(const Tensor& a) {
  const std::size_t rows = a.rows(), cols = a.cols();
  auto out = make_op(rows, cols, "softmax_rows", {a.node_ptr()});
  const auto& av = a.values();
  for (std::size_t i = 0; i < rows; ++i) {
    double row_max = av[i * cols];
    for (std::size_t j = 1; j < cols; ++j)
      row_max = std::max(row_max, av[i * cols + j]);
    double denom = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      const double e = std::exp(av[i * cols + j] - row_max);
      out->values[i * cols + j] = e;
      denom += e;
    }
    for (std::size_t j = 0; j < cols; ++j) out->values[i * cols + j] /= denom;
  }
  if (out->requires_grad)
    out->backprop = [rows, cols](TensorNode& self) {
      auto& A = *self.parents[0];
      if (!A.requires_grad) return;
      A.ensure_grad();
      for (std::size_t i = 0; i < rows; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < cols; ++j)
          dot += self.grad[i * cols + j] * self.values[i * cols + j];
        for (std::size_t j = 0; j < cols; ++j)
          A.grad[i * cols + j] +=
              self.values[i * cols + j] * (self.grad[i * cols + j] - dot);
      }
    };
  return Tensor(out);
}

Tensor concat_last_dim(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows())
    throw ShapeError("concat_last_dim: row counts differ");
  const std::size_t rows = a.rows(), ca = a.cols(), cb = b.cols();
  auto out = make_op(rows, ca + cb, "concat_last_dim",
                     {a.node_ptr(), b.node_ptr()});
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < ca; ++j)
      out->values[i * (ca + cb) + j] = av[i * ca + j];
    for (std::size_t j = 0; j < cb; ++j)
      out->values[i * (ca + cb) + ca + j] = bv[i * cb + j];
  }
  if (out->requires_grad)
    out->backprop = [rows, ca, cb](TensorNode& self) {
      auto& A = *self.parents[0];
      auto& B = *self.parents[1];
      if (A.requires_grad) {
        A.ensure_grad();
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < ca; ++j)
            A.grad[i * ca + j] += self.grad[i * (ca + cb) + j];
      }
      if (B.requires_grad) {
        B.ensure_grad();
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < cb; ++j)
            B.grad[i * cb + j] += self.grad[i * (ca + cb) + ca + j];
      }
    };
  return Tensor(out);
}

Tensor sum(const Tensor& a) {
  auto out = make_op(1, 1, "sum", {a.node_ptr()});
  double acc = 0.0;
  for (double v : a.values()) acc += v;
  out->values[0] = acc;
  if (out->requires_grad)
    out->backprop = [](TensorNode& self) {
      auto& A = *self.parents[0];
      if (!A.requires_grad) return;
      A.ensure_grad();
      for (std::size_t i = 0; i < A.grad.size(); ++i)
        A.grad[i] += self.grad[0];
    };
  return Tensor(out);
}

Tensor mean_rows(const Tensor& a) {
  const std::size_t rows = a.rows(), cols = a.cols();
  auto out = make_op(1, cols, "mean_rows", {a.node_ptr()});
  const auto& av = a.values();
  const double inv = 1.0 / static_cast<double>(rows);
  for (std::size_t j = 0; j < cols; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < rows; ++i) acc += av[i * cols + j];
    out->values[j] = acc * inv;
  }
  if (out->requires_grad)
    out->backprop = [rows, cols, inv](TensorNode& self) {
      auto& A = *self.parents[0];
      if (!A.requires_grad) return;
      A.ensure_grad();
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j)
          A.grad[i * cols + j] += self.grad[j] * inv;
    };
  return Tensor(out);
}

Tensor sq_euclidean(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sq_euclidean");
  auto out = make_op(1, 1, "sq_euclidean", {a.node_ptr(), b.node_ptr()});
  const auto& av = a.values();
  const auto& bv = b.values();
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = av[i] - bv[i];
    acc += d * d;
  }
  out->values[0] = acc;
  if (out->requires_grad)
    out->backprop = [](TensorNode& self) {
      auto& A = *self.parents[0];
      auto& B = *self.parents[1];
      if (A.requires_grad) A.ensure_grad();
      if (B.requires_grad) B.ensure_grad();
      const double g = self.grad[0];
      for (std::size_t i = 0; i < A.values.size(); ++i) {
        const double d = 2.0 * (A.values[i] - B.values[i]) * g;
        if (A.requires_grad) A.grad[i] += d;
        if (B.requires_grad) B.grad[i] -= d;
      }
    };
  return Tensor(out);
}

Tensor select_row(const Tensor& m, std::size_t i) {
  if (i >= m.rows()) throw ShapeError("select_row: row index out of range");
  const std::size_t cols = m.cols();
  auto out = make_op(1, cols, "select_row", {m.node_ptr()});
  const auto& mv = m.values();
  for (std::size_t j = 0; j < cols; ++j) out->values[j] = mv[i * cols + j];
  if (out->requires_grad)
    out->backprop = [i, cols](TensorNode& self) {
      auto& M = *self.parents[0];
      if (!M.requires_grad) return;
      M.ensure_grad();
      for (std::size_t j = 0; j < cols; ++j)
        M.grad[i * cols + j] += self.grad[j];
    };
  return Tensor(out);
}

Tensor flatten_upper_triangle(const Tensor& square) {
  const std::size_t n = square.rows();
  if (n != square.cols())
    throw ShapeError("flatten_upper_triangle: matrix must be square");
  if (n < 2)
    throw ShapeError("flatten_upper_triangle: need at least two rows");
  const std::size_t h = n * (n - 1) / 2;
  auto out = make_op(1, h, "flatten_upper_triangle", {square.node_ptr()});
  const auto& sv = square.values();
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) out->values[k++] = sv[i * n + j];
  if (out->requires_grad)
    out->backprop = [n](TensorNode& self) {
      auto& S = *self.parents[0];
      if (!S.requires_grad) return;
      S.ensure_grad();
      std::size_t k = 0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
          S.grad[i * n + j] += self.grad[k++];
    };
  return Tensor(out);
}

Tensor merge_rows(const Tensor& m, const Tensor& fused_row, std::size_t a,
                  std::size_t b) {
  const std::size_t rows = m.rows(), cols = m.cols();
  if (fused_row.rows() != 1 || fused_row.cols() != cols)
    throw ShapeError("merge_rows: fused row must be 1x" + std::to_string(cols));
  if (a >= b || b >= rows)
    throw ShapeError("merge_rows: need a < b < rows");
  auto out = make_op(rows - 1, cols, "merge_rows",
                     {m.node_ptr(), fused_row.node_ptr()});
  const auto& mv = m.values();
  const auto& fv = fused_row.values();
  for (std::size_t r = 0; r + 1 < rows; ++r) {
    const std::size_t src = r < b ? r : r + 1;
    if (src == a) {
      for (std::size_t j = 0; j < cols; ++j) out->values[r * cols + j] = fv[j];
    } else {
      for (std::size_t j = 0; j < cols; ++j)
        out->values[r * cols + j] = mv[src * cols + j];
    }
  }
  if (out->requires_grad)
    out->backprop = [rows, cols, a, b](TensorNode& self) {
      auto& M = *self.parents[0];
      auto& F = *self.parents[1];
      if (M.requires_grad) M.ensure_grad();
      if (F.requires_grad) F.ensure_grad();
      for (std::size_t r = 0; r + 1 < rows; ++r) {
        const std::size_t src = r < b ? r : r + 1;
        if (src == a) {
          if (F.requires_grad)
            for (std::size_t j = 0; j < cols; ++j)
              F.grad[j] += self.grad[r * cols + j];
        } else if (M.requires_grad) {
          for (std::size_t j = 0; j < cols; ++j)
            M.grad[src * cols + j] += self.grad[r * cols + j];
        }
      }
    };
  return Tensor(out);
}

Tensor straight_through(const Tensor& soft, std::vector<double> hard_values) {
  if (hard_values.size() != soft.size())
    throw ShapeError("straight_through: hard value count mismatch");
  auto out = make_op(soft.rows(), soft.cols(), "straight_through",
                     {soft.node_ptr()});
  out->values = std::move(hard_values);
  if (out->requires_grad)
    out->backprop = [](TensorNode& self) {
      auto& S = *self.parents[0];
      if (!S.requires_grad) return;
      S.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        S.grad[i] += self.grad[i];
    };
  return Tensor(out);
}

}  // namespace hiermatch

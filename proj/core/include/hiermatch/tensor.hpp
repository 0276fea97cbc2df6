#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hiermatch {

/// Raised when operand shapes are incompatible with an operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised on malformed configuration (bad keys, inconsistent settings).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised on missing or corrupt data files.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a computation leaves the finite-value domain (NaN/Inf loss).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;

namespace detail {

struct TensorNode {
  std::uint64_t id = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until first accumulation / zero_grad
  bool requires_grad = false;
  bool is_leaf = true;
  const char* op_name = "leaf";
  std::vector<std::shared_ptr<TensorNode>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(TensorNode&)> backprop;

  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
  }
};

std::shared_ptr<TensorNode> make_leaf(std::size_t rows, std::size_t cols,
                                      std::vector<double> values,
                                      bool requires_grad);

}  // namespace detail

/// Dense real-valued matrix participating in reverse-mode differentiation.
///
/// A Tensor is a cheap value-semantic handle to a shared node in an implicit
/// computation graph. All storage is double precision, row-major. Rank is at
/// most 2; vectors are 1xN rows and scalars are 1x1.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::size_t rows, std::size_t cols,
                      bool requires_grad = false);
  static Tensor from_values(std::size_t rows, std::size_t cols,
                            std::vector<double> values,
                            bool requires_grad = false);
  static Tensor row_vector(std::vector<double> values,
                           bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  std::size_t rows() const { return node().rows; }
  std::size_t cols() const { return node().cols; }
  std::size_t size() const { return node().values.size(); }
  const Shape& shape() const { return node().shape; }

  std::span<const double> values() const { return node().values; }
  /// Mutable access to leaf storage; used by optimizers between steps.
  /// Mutating a non-leaf (op output) is rejected.
  std::span<double> mutable_values();
  double value(std::size_t r, std::size_t c) const;
  /// The single element of a 1x1 tensor.
  double item() const;

  bool requires_grad() const { return node().requires_grad; }
  bool is_leaf() const { return node().is_leaf; }
  const char* op_name() const { return node().op_name; }
  std::uint64_t id() const { return node().id; }

  /// Accumulated gradient; empty span when never touched by backward.
  std::span<const double> grad() const { return node().grad; }
  /// Resets this tensor's gradient buffer to zeros.
  void zero_grad();

  detail::TensorNode& node() const;
  std::shared_ptr<detail::TensorNode> node_ptr() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::TensorNode> node)
      : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::TensorNode> node_;
};

/// One executed primitive op with references to its operands, in the order
/// the forward pass produced them.
struct ComputationRecord {
  struct OpEntry {
    std::uint64_t node_id = 0;
    const char* op_name = "leaf";
    std::vector<std::uint64_t> input_ids;
  };
  /// Topologically ordered: every entry's inputs appear earlier (leaves
  /// included). Replaying backward in reverse order visits each op once.
  std::vector<OpEntry> ops;
};

/// Walks the graph below `output` and returns its ops in topological order.
ComputationRecord record_computation(const Tensor& output);

/// Reverse-mode sweep from a scalar loss. Every requires_grad leaf reachable
/// from `loss` receives its gradient, accumulated additively on top of
/// whatever the grad buffer already holds.
void backward(const Tensor& loss);

// ---- primitive operations ----

Tensor matmul(const Tensor& a, const Tensor& b);
/// a * b^T without materializing the transpose.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
/// Adds a 1xN bias row to every row of an MxN matrix. The only broadcast
/// this engine supports.
Tensor add_row_bias(const Tensor& m, const Tensor& bias);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scalar_mul(const Tensor& a, double c);

Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
/// Row-wise softmax with max-subtraction for overflow safety.
Tensor softmax_rows(const Tensor& a);

/// Concatenates along the last (column) dimension: MxA ++ MxB -> Mx(A+B).
Tensor concat_last_dim(const Tensor& a, const Tensor& b);
/// Sum of all elements, as a 1x1 tensor.
Tensor sum(const Tensor& a);
/// Column-wise mean over rows: MxN -> 1xN.
Tensor mean_rows(const Tensor& a);
/// Squared Euclidean distance ||a - b||^2 over all elements, as 1x1.
Tensor sq_euclidean(const Tensor& a, const Tensor& b);

/// Copies row i out of an MxN matrix as 1xN; backward scatters into row i.
Tensor select_row(const Tensor& m, std::size_t i);
/// Strict upper-triangular entries of a square matrix, flattened row-major:
/// (0,1),(0,2),...,(0,N-1),(1,2),... as a 1xH row, H = N(N-1)/2.
Tensor flatten_upper_triangle(const Tensor& square);
/// Next-level node assembly: replaces row a with `fused_row`, removes row b
/// (a < b), and copies every other row of `m` unchanged.
Tensor merge_rows(const Tensor& m, const Tensor& fused_row, std::size_t a,
                  std::size_t b);
/// Straight-through coupling: forward value is `hard_values`, backward
/// passes the output gradient to `soft` unchanged.
Tensor straight_through(const Tensor& soft, std::vector<double> hard_values);

}  // namespace hiermatch

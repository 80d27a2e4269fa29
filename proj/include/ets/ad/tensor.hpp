#pragma once
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ets/errors.hpp"

namespace ets::ad {

class Tape;

// Dense rank-2 tensor of doubles.  Scalars are 1x1, row vectors 1xn.
// Values are fixed once the tensor enters a computation; only leaf values may
// be rewritten (by the optimizer, between tapes).  Gradients accumulate in g.
struct TensorData {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;
  std::vector<double> g;  // sized on first accumulation
  bool requires_grad = false;
  bool grad_set = false;
  bool leaf = true;
  std::int64_t id = -1;
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(int rows, int cols, std::vector<double> v);
  static Tensor zeros(int rows, int cols, bool requires_grad = false);
  static Tensor scalar(double x);
  // Trainable leaf.
  static Tensor param(int rows, int cols, std::vector<double> v);
  static Tensor identity(int n);

  bool defined() const { return static_cast<bool>(d_); }
  int rows() const { return d_->rows; }
  int cols() const { return d_->cols; }
  std::size_t size() const { return d_->v.size(); }
  bool is_scalar() const { return d_->rows == 1 && d_->cols == 1; }
  bool requires_grad() const { return d_->requires_grad; }

  double value() const;  // scalar only
  double value(int r, int c) const { return d_->v[index(r, c)]; }
  const std::vector<double>& values() const { return d_->v; }

  double grad(int r, int c) const;
  double grad() const;  // scalar only
  // Zero vector if backward never reached this tensor.
  std::vector<double> grad_vector() const;

  // Optimizer entry point: rewrite a leaf's values between tapes.
  void set_values(const std::vector<double>& v);

  std::int64_t id() const { return d_->id; }
  std::string shape_str() const;

  TensorData* data() const { return d_.get(); }
  std::shared_ptr<TensorData> shared() const { return d_; }

 private:
  std::size_t index(int r, int c) const {
    return static_cast<std::size_t>(r) * d_->cols + c;
  }
  friend class Tape;
  explicit Tensor(std::shared_ptr<TensorData> d) : d_(std::move(d)) {}
  std::shared_ptr<TensorData> d_;
};

// Records one node per operation; backward replays them in reverse.  A tape
// is single-threaded and lives for one forward/backward cycle (training
// rebuilds it every iteration).
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Root must be a scalar with requires_grad.  Seeds d(root)/d(root) = 1 and
  // propagates in reverse recording order.  Running twice without
  // reset_grads() throws.
  void backward(const Tensor& root);

  // Clears every gradient this tape has touched, allowing a second backward.
  void reset_grads();

  std::size_t node_count() const { return nodes_.size(); }
  bool backward_run() const { return backward_run_; }

  // Used by op implementations.
  Tensor make_output(int rows, int cols, std::vector<double> v,
                     bool requires_grad);
  void push_node(std::function<void()> back, Tensor out);
  void track(const Tensor& t);

 private:
  struct Node {
    std::function<void()> back;
    std::shared_ptr<TensorData> out;
  };
  std::vector<Node> nodes_;
  std::vector<std::shared_ptr<TensorData>> tracked_;
  bool backward_run_ = false;
};

// Gradient accumulation helper shared by op backward rules.
void accumulate_grad(TensorData* t, const std::vector<double>& delta);

// ---- recorded operations -------------------------------------------------
// Every op validates shapes and throws ets::shape_error naming the op and the
// offending shapes.  Results of ops on constant-only inputs skip recording.

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);

// add/sub accept equal shapes, or b broadcast as a 1xN row over a's rows,
// or b broadcast as a 1x1 scalar.
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);

// Elementwise product; a 1x1 operand broadcasts over the other.
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);

// Multiply by a compile-time constant.
Tensor smul(Tape& tape, const Tensor& a, double c);

Tensor tanh(Tape& tape, const Tensor& a);
Tensor relu(Tape& tape, const Tensor& a);
Tensor sigmoid(Tape& tape, const Tensor& a);
Tensor square(Tape& tape, const Tensor& a);
Tensor sqrt(Tape& tape, const Tensor& a);        // elementwise, inputs > 0
Tensor abs(Tape& tape, const Tensor& a);
Tensor log(Tape& tape, const Tensor& a);         // elementwise, inputs > 0
Tensor reciprocal(Tape& tape, const Tensor& a);  // elementwise, inputs != 0

Tensor sum(Tape& tape, const Tensor& a);      // 1x1
Tensor mean(Tape& tape, const Tensor& a);     // 1x1
Tensor rowsum(Tape& tape, const Tensor& a);   // m x 1
Tensor colsum(Tape& tape, const Tensor& a);   // 1 x n
Tensor colmean(Tape& tape, const Tensor& a);  // 1 x n

Tensor trace(Tape& tape, const Tensor& a);  // square input, 1x1
Tensor transpose(Tape& tape, const Tensor& a);

// Concatenate along columns; all parts share the row count.
Tensor concat_cols(Tape& tape, const std::vector<Tensor>& parts);

// Row selection (general slice).  Indices may repeat.
Tensor gather_rows(Tape& tape, const Tensor& a,
                   const std::vector<int>& indices);

// Batched matrix-vector product: v holds m row-major (d x d) matrices
// flattened to m x d^2, z is m x d; out[i] = V_i * z_i, m x d.
Tensor bmatvec(Tape& tape, const Tensor& v, const Tensor& z);

}  // namespace ets::ad

#pragma once

// Dense row-major tensors, a reverse-mode tape over them, the handful of
// differentiable operations the S3T network needs, and Adam.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace s3t::num {

using Shape = std::vector<std::size_t>;
using Rng = std::mt19937_64;

std::string to_string(const Shape& shape);
std::size_t element_count(const Shape& shape);

// Plain value array. Rank 1 tensors behave as a single row where a matrix is
// expected.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values);
  static Tensor vector(std::initializer_list<double> values);
  static Tensor scalar(double value) { return Tensor({1}, {value}); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }
  std::size_t rows() const { return shape_.size() == 2 ? shape_[0] : 1; }
  std::size_t cols() const { return shape_.empty() ? 0 : shape_.back(); }
  bool empty() const { return values_.empty(); }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }

  void fill(double v);
  Tensor reshaped(Shape shape) const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> values_;
};

class Tape;

// Handle to a node on a Tape: a DiffTensor. Cheap to copy; only valid while
// its tape is alive.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  // Empty tensor until backward() has run on a loss depending on this node.
  const Tensor& grad() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  std::size_t node_id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Records operations in execution order; backward() walks them in reverse,
// which is a valid reverse topological order. Confined to one thread.
class Tape {
 public:
  // Propagates the output gradient into the inputs of one recorded op.
  using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var parameter(Tensor value);

  // Appends the result of an op. The backward closure is dropped when none
  // of the inputs needs a gradient.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn backward);

  void backward(Var loss);

  // Gradient buffer of a node, allocated as zeros on first use.
  Tensor& grad_buffer(Var v);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& grad(std::size_t id) const { return nodes_[id].grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

// ---- differentiable operations -------------------------------------------

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
// a [m x n] plus bias [n] added to every row.
Var add_row(Var a, Var bias);
Var scale(Var a, double factor);
Var mul(Var a, Var b);
Var sum(Var a);
// Mean over rows: [m x n] -> [1 x n].
Var mean_rows(Var a);
Var softmax_rows(Var x);
// Normalizes each length-d row (d = last dimension), then gain * x + bias.
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
Var gelu(Var x);
// Depthwise same-length convolution along time with zero padding.
// x [C x T], kernel [C x k], bias [C].
Var conv1d_time(Var x, Var kernel, Var bias);
// Inverted dropout; identity when !training or rate == 0.
Var dropout(Var x, double rate, bool training, Rng& rng);
Var reshape(Var x, Shape shape);
Var columns(Var x, std::size_t begin, std::size_t count);
Var concat_columns(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
// Scaled dot-product attention on `heads` equal column blocks: head i gives
// softmax(Q_i K_i^T * scale) V_i. q, k [n x dk], v [n x dv] -> [n x dv]. Each
// head's attention matrix is appended to `probabilities` when given.
Var attention_heads(Var q, Var k, Var v, std::size_t heads, double scale,
                    std::vector<Tensor>* probabilities = nullptr);

// Scalar helpers without tape involvement.
double gelu_value(double x);
double normal_cdf(double x);

// ---- Adam ----------------------------------------------------------------

struct AdamConfig {
  double learning_rate = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.9;
  double epsilon = 1e-8;
};

struct AdamState {
  struct Moments {
    Tensor first;
    Tensor second;
  };

  AdamConfig config;
  std::size_t step_count = 0;
  std::map<std::string, Moments> moments;
};

// One trainable tensor and the gradient computed for it.
struct ParamSlot {
  std::string name;
  Tensor* value = nullptr;
  const Tensor* grad = nullptr;
};

// Bias-corrected Adam update applied in place to every slot.
void adam_step(std::span<const ParamSlot> params, AdamState& state);

}  // namespace s3t::num

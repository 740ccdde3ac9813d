#pragma once

#include <cstdint>
#include <filesystem>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace r2n::ad {

// Dense row-major array of doubles. Every op in this engine works on
// rank-2 tensors; scalars are 1x1.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
      : Tensor(std::vector<std::size_t>{rows, cols}, fill) {}
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> values);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::span<double> row(std::size_t r) { return values().subspan(r * cols(), cols()); }
  std::span<const double> row(std::size_t r) const {
    return values().subspan(r * cols(), cols());
  }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double item() const;

  void fill(double v);
  std::string shape_string() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

// A trainable tensor with its gradient buffer and Adam moments.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor m;
  Tensor v;
  // Gradient arrives through row gathers; the optimizer may then touch only
  // the rows that received gradient.
  bool sparse_rows = false;
  bool frozen = false;
  bool has_grad = false;
  bool dense_touched = false;
  std::vector<std::uint32_t> touched_rows;
  std::vector<std::uint8_t> row_mask;

  void mark_row(std::uint32_t r);
  void zero_grad();
};

class ParameterStore {
 public:
  Parameter& add(const std::string& name, Tensor init, bool sparse_rows = false);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.contains(name); }
  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  std::size_t parameter_count() const;
  void set_frozen(bool frozen);
  void zero_grad();

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::map<std::string, std::size_t> index_;
};

struct AdamConfig {
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Only rows that received gradient are updated in sparse-row parameters.
  bool sparse = true;
};

class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  // One bias-corrected update over every store; gradients are zeroed after.
  // Throws when no parameter received a gradient since the last step.
  void step(std::span<ParameterStore* const> stores);
  void step(ParameterStore& store) {
    ParameterStore* one[] = {&store};
    step(one);
  }

  std::uint64_t steps() const { return steps_; }
  void set_steps(std::uint64_t s) { steps_ = s; }
  const AdamConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }

 private:
  AdamConfig config_;
  std::uint64_t steps_ = 0;
};

class Tape;

// Handle to a node recorded on a Tape.
class Var {
 public:
  Var() = default;
  const Tensor& value() const;
  const Tensor& grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  Tape& tape() const { return *tape_; }
  std::uint32_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

// Records a computation as it runs; backward() replays it in reverse.
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::uint32_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Differentiable leaf; its gradient is readable through Var::grad().
  Var input(Tensor value);
  // Leaf bound to a parameter; backward accumulates into parameter.grad.
  Var parameter(Parameter& p);

  // Reverse accumulation from a 1x1 loss. A tape can be differentiated once.
  void backward(Var loss);

  // Smallest |x| fed to any relu so far, for finite-difference checks.
  double min_abs_relu_input() const { return min_abs_relu_input_; }
  std::size_t size() const { return nodes_.size(); }

  // Op plumbing, used by the free functions below.
  Var record(Tensor value, std::vector<std::uint32_t> inputs, Backward backward,
             const char* op, bool leaf_requires_grad = false);
  const Tensor& value(std::uint32_t id) const { return nodes_[id].value; }
  const Tensor& grad(std::uint32_t id) const;
  bool requires_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }
  // Gradient buffer of a node, allocated (zeroed) on first use.
  Tensor& grad_buffer(std::uint32_t id);
  const std::vector<std::uint32_t>& inputs(std::uint32_t id) const {
    return nodes_[id].inputs;
  }
  void note_relu_input(double v);
  Var var(std::uint32_t id) { return Var(this, id); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::uint32_t> inputs;
    Backward backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
    const char* op = "";
  };

  std::deque<Node> nodes_;
  bool differentiated_ = false;
  double min_abs_relu_input_ = 1e300;
};

// --- ops ------------------------------------------------------------------
// Shape mismatches throw r2n::Error(kShape) naming the op and the shapes.

Var gather_rows(Var table, std::span<const std::uint32_t> rows);
// Row gather straight from a parameter; backward writes only those rows.
Var gather_rows(Tape& tape, Parameter& table, std::span<const std::uint32_t> rows);
// out[rows[i]] += src[i]; output has n_rows rows.
Var scatter_add_rows(Var src, std::span<const std::uint32_t> rows, std::size_t n_rows);
Var add(Var a, Var b);
Var subtract(Var a, Var b);
Var multiply(Var a, Var b);
// x [n x d] plus bias [1 x d] on every row.
Var add_bias(Var x, Var bias);
Var matmul(Var a, Var b);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var sum(Var x);        // -> 1x1
Var sum_cols(Var x);   // [n x d] -> [n x 1]
Var sigmoid(Var x);
Var relu(Var x);
Var row_norm(Var x);   // euclidean norm of each row -> [n x 1]
Var reciprocal_1p(Var x);  // 1 / (1 + x)
// Mean binary cross-entropy; predictions clamped to [1e-7, 1 - 1e-7].
Var bce_loss(Var pred, const Tensor& target);

inline constexpr double kProbClamp = 1e-7;

// --- checkpoint container ------------------------------------------------------

struct Checkpoint {
  std::string config;  // free-form echo of the producing configuration
  std::uint64_t adam_steps = 0;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

// Parameter values plus Adam moments (stored as "<name>@m", "<name>@v").
Checkpoint make_checkpoint(std::span<const ParameterStore* const> stores,
                           const Adam* adam, std::string config);
// Every parameter of the stores must be present with a matching shape.
// Moments are restored when present.
void restore_checkpoint(const Checkpoint& ckpt, std::span<ParameterStore* const> stores,
                        Adam* adam);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);
void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);

}  // namespace r2n::ad

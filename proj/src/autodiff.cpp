#include "r2n/autodiff.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "r2n/error.hpp"

namespace r2n::ad {

namespace {

Error shape_error(const char* op, const Tensor& a, const Tensor& b) {
  return Error(ErrorKind::kShape, std::string(op) + ": incompatible shapes " +
                                      a.shape_string() + " and " + b.shape_string());
}

Error shape_error(const char* op, const std::string& what) {
  return Error(ErrorKind::kShape, std::string(op) + ": " + what);
}

void require_rank2(const char* op, const Tensor& t) {
  if (t.rank() != 2) throw shape_error(op, "expected rank-2 tensor, got " + t.shape_string());
}

void add_into(std::span<double> dst, std::span<const double> src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

// c[n x m] += a[n x k] * b[k x m]
void gemm_nn(const Tensor& a, const Tensor& b, Tensor& c) {
  const auto n = a.rows(), k = a.cols(), m = b.cols();
  for (std::size_t i = 0; i < n; ++i) {
    double* crow = c.data() + i * m;
    const double* arow = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[n x k] += g[n x m] * b[k x m]^T
void gemm_nt(const Tensor& g, const Tensor& b, Tensor& c) {
  const auto n = g.rows(), m = g.cols(), k = b.rows();
  for (std::size_t i = 0; i < n; ++i) {
    const double* grow = g.data() + i * m;
    double* crow = c.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b.data() + p * m;
      double acc = 0.0;
      for (std::size_t j = 0; j < m; ++j) acc += grow[j] * brow[j];
      crow[p] += acc;
    }
  }
}

// c[k x m] += a[n x k]^T * g[n x m]
void gemm_tn(const Tensor& a, const Tensor& g, Tensor& c) {
  const auto n = a.rows(), k = a.cols(), m = g.cols();
  for (std::size_t i = 0; i < n; ++i) {
    const double* arow = a.data() + i * k;
    const double* grow = g.data() + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      double* crow = c.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * grow[j];
    }
  }
}

}  // namespace

// --- Tensor -------------------------------------------------------------------

Tensor::Tensor(std::vector<std::size_t> shape, double fill) : shape_(std::move(shape)) {
  std::size_t n = 1;
  for (auto d : shape_) n *= d;
  data_.assign(n, fill);
}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> values)
    : shape_{rows, cols}, data_(std::move(values)) {
  if (data_.size() != rows * cols) {
    throw shape_error("Tensor", "value count " + std::to_string(data_.size()) +
                                    " does not match shape " + shape_string());
  }
}

std::size_t Tensor::rows() const { return shape_.empty() ? 0 : shape_[0]; }
std::size_t Tensor::cols() const { return shape_.size() < 2 ? 1 : shape_[1]; }

double Tensor::item() const {
  if (data_.size() != 1) throw shape_error("item", "tensor is not a scalar: " + shape_string());
  return data_[0];
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

std::string Tensor::shape_string() const {
  std::string s = "[";
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape_[i]);
  }
  return s + "]";
}

// --- Parameter / store ----------------------------------------------------------

void Parameter::mark_row(std::uint32_t r) {
  if (row_mask.size() != value.rows()) row_mask.assign(value.rows(), 0);
  if (!row_mask[r]) {
    row_mask[r] = 1;
    touched_rows.push_back(r);
  }
}

void Parameter::zero_grad() {
  if (dense_touched || !sparse_rows) {
    grad.fill(0.0);
  } else {
    for (auto r : touched_rows) {
      auto row = grad.row(r);
      std::fill(row.begin(), row.end(), 0.0);
    }
  }
  for (auto r : touched_rows) row_mask[r] = 0;
  touched_rows.clear();
  has_grad = false;
  dense_touched = false;
}

Parameter& ParameterStore::add(const std::string& name, Tensor init, bool sparse_rows) {
  if (index_.contains(name)) throw invalid_argument("duplicate parameter '" + name + "'");
  require_rank2("ParameterStore::add", init);
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->grad = Tensor(init.shape());
  p->m = Tensor(init.shape());
  p->v = Tensor(init.shape());
  p->value = std::move(init);
  p->sparse_rows = sparse_rows;
  index_[name] = params_.size();
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter& ParameterStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw invalid_argument("unknown parameter '" + name + "'");
  return *params_[it->second];
}

const Parameter& ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw invalid_argument("unknown parameter '" + name + "'");
  return *params_[it->second];
}

std::vector<Parameter*> ParameterStore::all() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> ParameterStore::all() const {
  std::vector<const Parameter*> out;
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

std::size_t ParameterStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

void ParameterStore::set_frozen(bool frozen) {
  for (auto& p : params_) p->frozen = frozen;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

// --- Adam -------------------------------------------------------------------------

void Adam::step(std::span<ParameterStore* const> stores) {
  bool any = false;
  for (auto* store : stores) {
    for (auto* p : store->all()) any = any || p->has_grad;
  }
  if (!any) {
    throw invalid_argument("adam_step: no parameter has a populated gradient");
  }
  ++steps_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  const double lr = config_.lr, eps = config_.eps;
  auto update = [&](Parameter& p, std::size_t begin, std::size_t end) {
    double* w = p.value.data();
    double* g = p.grad.data();
    double* m = p.m.data();
    double* v = p.v.data();
    for (std::size_t i = begin; i < end; ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      w[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
    }
  };
  for (auto* store : stores) {
    for (auto* p : store->all()) {
      if (!p->has_grad || p->frozen) {
        if (p->has_grad) p->zero_grad();
        continue;
      }
      if (p->sparse_rows && config_.sparse && !p->dense_touched) {
        const auto cols = p->value.cols();
        for (auto r : p->touched_rows) update(*p, r * cols, (r + 1) * cols);
      } else {
        update(*p, 0, p->value.size());
      }
      p->zero_grad();
    }
  }
}

// --- Tape ---------------------------------------------------------------------------

const Tensor& Var::value() const { return tape_->value(id_); }
const Tensor& Var::grad() const { return tape_->grad(id_); }

Var Tape::record(Tensor value, std::vector<std::uint32_t> inputs, Backward backward,
                 const char* op, bool leaf_requires_grad) {
  Node node;
  node.requires_grad = leaf_requires_grad ||
                       std::any_of(inputs.begin(), inputs.end(),
                                   [&](std::uint32_t i) { return nodes_[i].requires_grad; });
  node.value = std::move(value);
  node.inputs = std::move(inputs);
  if (node.requires_grad) node.backward = std::move(backward);
  node.op = op;
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::constant(Tensor value) {
  require_rank2("constant", value);
  Node node;
  node.value = std::move(value);
  node.op = "constant";
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::input(Tensor value) {
  require_rank2("input", value);
  Node node;
  node.value = std::move(value);
  node.requires_grad = true;
  node.op = "input";
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::parameter(Parameter& p) {
  Node node;
  node.value = p.value;
  node.param = &p;
  node.requires_grad = !p.frozen;
  node.op = "parameter";
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

const Tensor& Tape::grad(std::uint32_t id) const {
  const auto& node = nodes_[id];
  if (node.grad.empty() && node.value.size() > 0) {
    throw invalid_argument("no gradient recorded for node (op " + std::string(node.op) + ")");
  }
  return node.grad;
}

Tensor& Tape::grad_buffer(std::uint32_t id) {
  auto& node = nodes_[id];
  if (node.grad.shape() != node.value.shape()) node.grad = Tensor(node.value.shape());
  return node.grad;
}

void Tape::note_relu_input(double v) {
  min_abs_relu_input_ = std::min(min_abs_relu_input_, std::abs(v));
}

void Tape::backward(Var loss) {
  if (loss.tape_ != this) throw invalid_argument("backward: loss belongs to another tape");
  if (differentiated_) {
    throw invalid_argument("backward: tape already differentiated; re-run forward");
  }
  const auto& lv = nodes_[loss.id_].value;
  if (lv.size() != 1) {
    throw shape_error("backward", "loss must be scalar, got " + lv.shape_string());
  }
  differentiated_ = true;
  if (!nodes_[loss.id_].requires_grad) return;
  grad_buffer(loss.id_).data()[0] = 1.0;
  for (std::int64_t id = loss.id_; id >= 0; --id) {
    auto& node = nodes_[static_cast<std::size_t>(id)];
    if (!node.requires_grad || node.grad.empty()) continue;
    if (node.backward) node.backward(*this, static_cast<std::uint32_t>(id));
    if (node.param != nullptr) {
      add_into(node.param->grad.values(), node.grad.values());
      node.param->has_grad = true;
      node.param->dense_touched = true;
    }
  }
}

// --- ops ------------------------------------------------------------------------------

Var gather_rows(Var table, std::span<const std::uint32_t> rows) {
  auto& tape = table.tape();
  const auto& t = table.value();
  require_rank2("gather_rows", t);
  const auto d = t.cols();
  Tensor out(rows.size(), d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= t.rows()) {
      throw shape_error("gather_rows", "row " + std::to_string(rows[i]) +
                                           " out of range for " + t.shape_string());
    }
    std::copy_n(t.data() + rows[i] * d, d, out.data() + i * d);
  }
  std::vector<std::uint32_t> idx(rows.begin(), rows.end());
  return tape.record(
      std::move(out), {table.id()},
      [idx = std::move(idx), d](Tape& tp, std::uint32_t self) {
        auto src = tp.inputs(self)[0];
        if (!tp.requires_grad(src)) return;
        const auto& g = tp.grad_buffer(self);
        auto& dst = tp.grad_buffer(src);
        for (std::size_t i = 0; i < idx.size(); ++i) {
          add_into(dst.values().subspan(idx[i] * d, d), g.values().subspan(i * d, d));
        }
      },
      "gather_rows");
}

Var gather_rows(Tape& tape, Parameter& table, std::span<const std::uint32_t> rows) {
  const auto& t = table.value;
  const auto d = t.cols();
  Tensor out(rows.size(), d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= t.rows()) {
      throw shape_error("gather_rows", "row " + std::to_string(rows[i]) + " out of range for " +
                                           table.name + " " + t.shape_string());
    }
    std::copy_n(t.data() + rows[i] * d, d, out.data() + i * d);
  }
  std::vector<std::uint32_t> idx(rows.begin(), rows.end());
  Parameter* p = &table;
  return tape.record(
      std::move(out), {},
      [idx = std::move(idx), d, p](Tape& tp, std::uint32_t self) {
        const auto& g = tp.grad_buffer(self);
        for (std::size_t i = 0; i < idx.size(); ++i) {
          add_into(p->grad.row(idx[i]), g.values().subspan(i * d, d));
          p->mark_row(idx[i]);
        }
        p->has_grad = true;
      },
      "gather_param", !table.frozen);
}

Var scatter_add_rows(Var src, std::span<const std::uint32_t> rows, std::size_t n_rows) {
  auto& tape = src.tape();
  const auto& s = src.value();
  require_rank2("scatter_add_rows", s);
  if (rows.size() != s.rows()) {
    throw shape_error("scatter_add_rows", std::to_string(rows.size()) +
                                              " indices for " + s.shape_string());
  }
  const auto d = s.cols();
  Tensor out(n_rows, d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= n_rows) throw shape_error("scatter_add_rows", "row index out of range");
    add_into(out.row(rows[i]), s.values().subspan(i * d, d));
  }
  std::vector<std::uint32_t> idx(rows.begin(), rows.end());
  return tape.record(
      std::move(out), {src.id()},
      [idx = std::move(idx), d](Tape& tp, std::uint32_t self) {
        const auto& g = tp.grad_buffer(self);
        auto& dst = tp.grad_buffer(tp.inputs(self)[0]);
        for (std::size_t i = 0; i < idx.size(); ++i) {
          add_into(dst.values().subspan(i * d, d), g.values().subspan(idx[i] * d, d));
        }
      },
      "scatter_add_rows");
}

namespace {

template <typename Fwd, typename Bwd>
Var elementwise2(const char* op, Var a, Var b, Fwd fwd, Bwd bwd) {
  auto& tape = a.tape();
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.shape() != bv.shape()) throw shape_error(op, av, bv);
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = fwd(av.data()[i], bv.data()[i]);
  return tape.record(
      std::move(out), {a.id(), b.id()},
      [bwd](Tape& tp, std::uint32_t self) {
        const auto ia = tp.inputs(self)[0];
        const auto ib = tp.inputs(self)[1];
        const auto& g = tp.grad_buffer(self);
        const auto& x = tp.value(ia);
        const auto& y = tp.value(ib);
        if (tp.requires_grad(ia)) {
          auto& ga = tp.grad_buffer(ia);
          for (std::size_t i = 0; i < g.size(); ++i)
            ga.data()[i] += g.data()[i] * bwd(x.data()[i], y.data()[i], 0);
        }
        if (tp.requires_grad(ib)) {
          auto& gb = tp.grad_buffer(ib);
          for (std::size_t i = 0; i < g.size(); ++i)
            gb.data()[i] += g.data()[i] * bwd(x.data()[i], y.data()[i], 1);
        }
      },
      op);
}

template <typename Fwd, typename Bwd>
Var elementwise1(const char* op, Var x, Fwd fwd, Bwd bwd) {
  auto& tape = x.tape();
  const auto& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = fwd(xv.data()[i]);
  return tape.record(
      std::move(out), {x.id()},
      [bwd](Tape& tp, std::uint32_t self) {
        const auto ix = tp.inputs(self)[0];
        const auto& g = tp.grad_buffer(self);
        const auto& in = tp.value(ix);
        const auto& y = tp.value(self);
        auto& gx = tp.grad_buffer(ix);
        for (std::size_t i = 0; i < g.size(); ++i)
          gx.data()[i] += g.data()[i] * bwd(in.data()[i], y.data()[i]);
      },
      op);
}

}  // namespace

Var add(Var a, Var b) {
  return elementwise2(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, int) { return 1.0; });
}

Var subtract(Var a, Var b) {
  return elementwise2(
      "subtract", a, b, [](double x, double y) { return x - y; },
      [](double, double, int which) { return which == 0 ? 1.0 : -1.0; });
}

Var multiply(Var a, Var b) {
  return elementwise2(
      "multiply", a, b, [](double x, double y) { return x * y; },
      [](double x, double y, int which) { return which == 0 ? y : x; });
}

Var add_bias(Var x, Var bias) {
  auto& tape = x.tape();
  const auto& xv = x.value();
  const auto& bv = bias.value();
  require_rank2("add_bias", xv);
  if (bv.rows() != 1 || bv.cols() != xv.cols()) throw shape_error("add_bias", xv, bv);
  Tensor out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r) add_into(out.row(r), bv.values());
  return tape.record(
      std::move(out), {x.id(), bias.id()},
      [](Tape& tp, std::uint32_t self) {
        const auto ix = tp.inputs(self)[0];
        const auto ib = tp.inputs(self)[1];
        const auto& g = tp.grad_buffer(self);
        if (tp.requires_grad(ix)) add_into(tp.grad_buffer(ix).values(), g.values());
        if (tp.requires_grad(ib)) {
          auto& gb = tp.grad_buffer(ib);
          for (std::size_t r = 0; r < g.rows(); ++r) add_into(gb.values(), g.row(r));
        }
      },
      "add_bias");
}

Var matmul(Var a, Var b) {
  auto& tape = a.tape();
  const auto& av = a.value();
  const auto& bv = b.value();
  require_rank2("matmul", av);
  require_rank2("matmul", bv);
  if (av.cols() != bv.rows()) throw shape_error("matmul", av, bv);
  Tensor out(av.rows(), bv.cols());
  gemm_nn(av, bv, out);
  return tape.record(
      std::move(out), {a.id(), b.id()},
      [](Tape& tp, std::uint32_t self) {
        const auto ia = tp.inputs(self)[0];
        const auto ib = tp.inputs(self)[1];
        const auto& g = tp.grad_buffer(self);
        if (tp.requires_grad(ia)) gemm_nt(g, tp.value(ib), tp.grad_buffer(ia));
        if (tp.requires_grad(ib)) gemm_tn(tp.value(ia), g, tp.grad_buffer(ib));
      },
      "matmul");
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw shape_error("concat_cols", "no inputs");
  auto& tape = parts[0].tape();
  const auto n = parts[0].value().rows();
  std::vector<std::size_t> widths;
  std::vector<std::uint32_t> ids;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_rank2("concat_cols", p.value());
    if (p.value().rows() != n) throw shape_error("concat_cols", parts[0].value(), p.value());
    widths.push_back(p.value().cols());
    ids.push_back(p.id());
    total += p.value().cols();
  }
  Tensor out(n, total);
  for (std::size_t r = 0; r < n; ++r) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      auto src = parts[k].value().row(r);
      std::copy(src.begin(), src.end(), out.data() + r * total + off);
      off += widths[k];
    }
  }
  return tape.record(
      std::move(out), std::move(ids),
      [widths, total](Tape& tp, std::uint32_t self) {
        const auto& g = tp.grad_buffer(self);
        const auto& ins = tp.inputs(self);
        std::size_t off = 0;
        for (std::size_t k = 0; k < ins.size(); ++k) {
          if (tp.requires_grad(ins[k])) {
            auto& gk = tp.grad_buffer(ins[k]);
            for (std::size_t r = 0; r < g.rows(); ++r) {
              add_into(gk.row(r), g.values().subspan(r * total + off, widths[k]));
            }
          }
          off += widths[k];
        }
      },
      "concat_cols");
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw shape_error("concat_rows", "no inputs");
  auto& tape = parts[0].tape();
  const auto d = parts[0].value().cols();
  std::vector<std::size_t> heights;
  std::vector<std::uint32_t> ids;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_rank2("concat_rows", p.value());
    if (p.value().cols() != d) throw shape_error("concat_rows", parts[0].value(), p.value());
    heights.push_back(p.value().rows());
    ids.push_back(p.id());
    total += p.value().rows();
  }
  Tensor out(total, d);
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.value().data(), p.value().data() + p.value().size(), out.data() + off * d);
    off += p.value().rows();
  }
  return tape.record(
      std::move(out), std::move(ids),
      [heights, d](Tape& tp, std::uint32_t self) {
        const auto& g = tp.grad_buffer(self);
        const auto& ins = tp.inputs(self);
        std::size_t off = 0;
        for (std::size_t k = 0; k < ins.size(); ++k) {
          if (tp.requires_grad(ins[k])) {
            add_into(tp.grad_buffer(ins[k]).values(),
                     g.values().subspan(off * d, heights[k] * d));
          }
          off += heights[k];
        }
      },
      "concat_rows");
}

Var sum(Var x) {
  auto& tape = x.tape();
  const auto& xv = x.value();
  Tensor out(1, 1);
  out.data()[0] = std::accumulate(xv.data(), xv.data() + xv.size(), 0.0);
  return tape.record(
      std::move(out), {x.id()},
      [](Tape& tp, std::uint32_t self) {
        const double g = tp.grad_buffer(self).data()[0];
        auto& gx = tp.grad_buffer(tp.inputs(self)[0]);
        for (auto& v : gx.values()) v += g;
      },
      "sum");
}

Var sum_cols(Var x) {
  auto& tape = x.tape();
  const auto& xv = x.value();
  require_rank2("sum_cols", xv);
  Tensor out(xv.rows(), 1);
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    auto row = xv.row(r);
    out.data()[r] = std::accumulate(row.begin(), row.end(), 0.0);
  }
  return tape.record(
      std::move(out), {x.id()},
      [](Tape& tp, std::uint32_t self) {
        const auto& g = tp.grad_buffer(self);
        auto& gx = tp.grad_buffer(tp.inputs(self)[0]);
        for (std::size_t r = 0; r < gx.rows(); ++r) {
          for (auto& v : gx.row(r)) v += g.data()[r];
        }
      },
      "sum_cols");
}

Var sigmoid(Var x) {
  return elementwise1(
      "sigmoid", x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double, double y) { return y * (1.0 - y); });
}

Var relu(Var x) {
  auto& tape = x.tape();
  for (double v : x.value().values()) tape.note_relu_input(v);
  return elementwise1(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double in, double) { return in > 0.0 ? 1.0 : 0.0; });
}

Var reciprocal_1p(Var x) {
  return elementwise1(
      "reciprocal_1p", x, [](double v) { return 1.0 / (1.0 + v); },
      [](double, double y) { return -y * y; });
}

Var row_norm(Var x) {
  auto& tape = x.tape();
  const auto& xv = x.value();
  require_rank2("row_norm", xv);
  Tensor out(xv.rows(), 1);
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    double s = 0.0;
    for (double v : xv.row(r)) s += v * v;
    out.data()[r] = std::sqrt(s);
  }
  return tape.record(
      std::move(out), {x.id()},
      [](Tape& tp, std::uint32_t self) {
        const auto ix = tp.inputs(self)[0];
        const auto& g = tp.grad_buffer(self);
        const auto& y = tp.value(self);
        const auto& in = tp.value(ix);
        auto& gx = tp.grad_buffer(ix);
        for (std::size_t r = 0; r < in.rows(); ++r) {
          const double n = y.data()[r];
          if (n == 0.0) continue;  // subgradient 0 at the origin
          const double scale = g.data()[r] / n;
          auto src = in.row(r);
          auto dst = gx.row(r);
          for (std::size_t c = 0; c < src.size(); ++c) dst[c] += scale * src[c];
        }
      },
      "row_norm");
}

Var bce_loss(Var pred, const Tensor& target) {
  auto& tape = pred.tape();
  const auto& p = pred.value();
  if (p.shape() != target.shape()) throw shape_error("bce_loss", p, target);
  if (p.size() == 0) throw shape_error("bce_loss", "empty batch");
  const double n = static_cast<double>(p.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double q = std::clamp(p.data()[i], kProbClamp, 1.0 - kProbClamp);
    const double t = target.data()[i];
    loss -= t * std::log(q) + (1.0 - t) * std::log(1.0 - q);
  }
  Tensor out(1, 1);
  out.data()[0] = loss / n;
  return tape.record(
      std::move(out), {pred.id()},
      [target, n](Tape& tp, std::uint32_t self) {
        const double g = tp.grad_buffer(self).data()[0];
        const auto ip = tp.inputs(self)[0];
        const auto& pv = tp.value(ip);
        auto& gp = tp.grad_buffer(ip);
        for (std::size_t i = 0; i < pv.size(); ++i) {
          const double q = pv.data()[i];
          if (q < kProbClamp || q > 1.0 - kProbClamp) continue;
          const double t = target.data()[i];
          gp.data()[i] += g * (q - t) / (q * (1.0 - q)) / n;
        }
      },
      "bce_loss");
}

// --- checkpoints ---------------------------------------------------------------------

static_assert(std::endian::native == std::endian::little,
              "checkpoint IO writes host-order values and assumes little-endian");

namespace {

constexpr char kCheckpointMagic[8] = {'R', '2', 'N', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw Error(ErrorKind::kFormat, "checkpoint: truncated");
  }
  return v;
}

std::string get_string(std::istream& in, std::uint64_t max_len) {
  auto n = get<std::uint64_t>(in);
  if (n > max_len) throw Error(ErrorKind::kFormat, "checkpoint: implausible string length");
  std::string s(n, '\0');
  if (n && !in.read(s.data(), static_cast<std::streamsize>(n))) {
    throw Error(ErrorKind::kFormat, "checkpoint: truncated");
  }
  return s;
}

}  // namespace

Checkpoint make_checkpoint(std::span<const ParameterStore* const> stores, const Adam* adam,
                           std::string config) {
  Checkpoint ckpt;
  ckpt.config = std::move(config);
  ckpt.adam_steps = adam ? adam->steps() : 0;
  for (const auto* store : stores) {
    for (const auto* p : store->all()) {
      ckpt.tensors.emplace_back(p->name, p->value);
      if (adam) {
        ckpt.tensors.emplace_back(p->name + "@m", p->m);
        ckpt.tensors.emplace_back(p->name + "@v", p->v);
      }
    }
  }
  return ckpt;
}

void restore_checkpoint(const Checkpoint& ckpt, std::span<ParameterStore* const> stores,
                        Adam* adam) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : ckpt.tensors) by_name[name] = &t;
  // Validate everything before mutating anything.
  for (auto* store : stores) {
    for (auto* p : store->all()) {
      auto it = by_name.find(p->name);
      if (it == by_name.end()) {
        throw Error(ErrorKind::kFormat, "checkpoint: missing tensor '" + p->name + "'");
      }
      if (it->second->shape() != p->value.shape()) {
        throw Error(ErrorKind::kFormat, "checkpoint: tensor '" + p->name + "' has shape " +
                                            it->second->shape_string() + ", model expects " +
                                            p->value.shape_string());
      }
    }
  }
  for (auto* store : stores) {
    for (auto* p : store->all()) {
      p->value = *by_name.at(p->name);
      auto m = by_name.find(p->name + "@m");
      auto v = by_name.find(p->name + "@v");
      if (m != by_name.end() && m->second->shape() == p->value.shape()) p->m = *m->second;
      if (v != by_name.end() && v->second->shape() == p->value.shape()) p->v = *v->second;
      p->zero_grad();
    }
  }
  if (adam) adam->set_steps(ckpt.adam_steps);
}

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  put(out, kCheckpointVersion);
  put<std::uint64_t>(out, ckpt.config.size());
  out.write(ckpt.config.data(), static_cast<std::streamsize>(ckpt.config.size()));
  put<std::uint64_t>(out, ckpt.adam_steps);
  put<std::uint64_t>(out, ckpt.tensors.size());
  for (const auto& [name, t] : ckpt.tensors) {
    put<std::uint64_t>(out, name.size());
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put<std::uint64_t>(out, d);
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!out) throw Error(ErrorKind::kIo, "checkpoint: write failed");
}

Checkpoint read_checkpoint(std::istream& in) {
  char magic[8];
  if (!in.read(magic, sizeof(magic)) ||
      std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw Error(ErrorKind::kFormat, "checkpoint: bad magic");
  }
  auto version = get<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw Error(ErrorKind::kFormat,
                "checkpoint: unsupported version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.config = get_string(in, 1u << 26);
  ckpt.adam_steps = get<std::uint64_t>(in);
  auto n = get<std::uint64_t>(in);
  for (std::uint64_t i = 0; i < n; ++i) {
    auto name = get_string(in, 1u << 20);
    auto rank = get<std::uint32_t>(in);
    if (rank > 8) throw Error(ErrorKind::kFormat, "checkpoint: implausible rank");
    std::vector<std::size_t> shape;
    for (std::uint32_t k = 0; k < rank; ++k) shape.push_back(get<std::uint64_t>(in));
    Tensor t(shape);
    if (t.size() && !in.read(reinterpret_cast<char*>(t.data()),
                             static_cast<std::streamsize>(t.size() * sizeof(double)))) {
      throw Error(ErrorKind::kFormat, "checkpoint: truncated tensor '" + name + "'");
    }
    ckpt.tensors.emplace_back(std::move(name), std::move(t));
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  write_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kMissingArtifact, "cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

}  // namespace r2n::ad

#pragma once

// Central finite differences against reverse-mode gradients.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "r2n/autodiff.hpp"

namespace oracle {

inline constexpr double kStep = 1e-4;

struct GradCheck {
  double rel_error = 0.0;
  // Smallest |x| fed to a relu on the unperturbed pass; below kStep a
  // perturbation may cross the kink and the check is meaningless.
  double min_relu_input = 1e300;
};

inline double rel_error(const std::vector<double>& a, const std::vector<double>& n) {
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - n[i]) * (a[i] - n[i]);
    na += a[i] * a[i];
    nn += n[i] * n[i];
  }
  const double denom = std::max({std::sqrt(na), std::sqrt(nn), 1e-8});
  return std::sqrt(diff) / denom;
}

// `build` records a scalar loss over tape inputs created from `inputs`.
using InputFn = std::function<r2n::ad::Var(r2n::ad::Tape&, std::vector<r2n::ad::Var>&)>;

inline GradCheck check_inputs(const InputFn& build, std::vector<r2n::ad::Tensor> inputs) {
  using namespace r2n::ad;
  GradCheck out;
  std::vector<double> analytic;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const auto& t : inputs) vars.push_back(tape.input(t));
    auto loss = build(tape, vars);
    tape.backward(loss);
    out.min_relu_input = tape.min_abs_relu_input();
    for (const auto& v : vars) {
      const auto g = v.grad().values();
      analytic.insert(analytic.end(), g.begin(), g.end());
    }
  }
  auto eval = [&] {
    Tape tape;
    std::vector<Var> vars;
    for (const auto& t : inputs) vars.push_back(tape.input(t));
    return build(tape, vars).value().item();
  };
  std::vector<double> numeric;
  for (auto& t : inputs) {
    for (auto& x : t.values()) {
      const double x0 = x;
      x = x0 + kStep;
      const double up = eval();
      x = x0 - kStep;
      const double down = eval();
      x = x0;
      numeric.push_back((up - down) / (2 * kStep));
    }
  }
  out.rel_error = rel_error(analytic, numeric);
  return out;
}

// Same, over parameter values; gradients are read from Parameter::grad.
using ParamFn = std::function<r2n::ad::Var(r2n::ad::Tape&)>;

inline GradCheck check_params(const ParamFn& build, const std::vector<r2n::ad::Parameter*>& params) {
  using namespace r2n::ad;
  GradCheck out;
  for (auto* p : params) p->zero_grad();
  std::vector<double> analytic;
  {
    Tape tape;
    auto loss = build(tape);
    tape.backward(loss);
    out.min_relu_input = tape.min_abs_relu_input();
  }
  for (auto* p : params) {
    if (p->grad.size() != p->value.size()) {
      analytic.insert(analytic.end(), p->value.size(), 0.0);
    } else {
      const auto g = p->grad.values();
      analytic.insert(analytic.end(), g.begin(), g.end());
    }
    p->zero_grad();
  }
  auto eval = [&] {
    Tape tape;
    return build(tape).value().item();
  };
  std::vector<double> numeric;
  for (auto* p : params) {
    for (auto& x : p->value.values()) {
      const double x0 = x;
      x = x0 + kStep;
      const double up = eval();
      x = x0 - kStep;
      const double down = eval();
      x = x0;
      numeric.push_back((up - down) / (2 * kStep));
    }
  }
  for (auto* p : params) p->zero_grad();
  out.rel_error = rel_error(analytic, numeric);
  return out;
}

}  // namespace oracle

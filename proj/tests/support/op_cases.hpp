#pragma once

// Randomized single-op and composed-graph cases for finite-difference checks.

#include <functional>
#include <random>
#include <vector>

#include "r2n/autodiff.hpp"

namespace gradcases {

using r2n::ad::Tape;
using r2n::ad::Tensor;
using r2n::ad::Var;
using namespace r2n::ad;


inline Tensor random_tensor(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double lo = -1.0,
                     double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(rows, cols);
  for (auto& x : t.values()) x = u(rng);
  return t;
}

// Contracts an op output with fixed random weights so every output element
// contributes a distinct amount to the loss.
inline Var contract(Tape& tape, Var out, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sum(multiply(out, tape.constant(random_tensor(rng, out.rows(), out.cols()))));
}

struct OpCase {
  const char* name;
  std::function<std::vector<Tensor>(std::mt19937_64&)> inputs;
  std::function<Var(Tape&, std::vector<Var>&)> build;
};

inline std::size_t dim(std::mt19937_64& rng) { return 1 + rng() % 5; }

inline std::vector<OpCase> op_cases() {
  std::vector<OpCase> cases;
  cases.push_back({"add",
                   [](auto& rng) {
                     auto r = dim(rng), c = dim(rng);
                     return std::vector{random_tensor(rng, r, c), random_tensor(rng, r, c)};
                   },
                   [](Tape&, auto& v) { return add(v[0], v[1]); }});
  cases.push_back({"subtract",
                   [](auto& rng) {
                     auto r = dim(rng), c = dim(rng);
                     return std::vector{random_tensor(rng, r, c), random_tensor(rng, r, c)};
                   },
                   [](Tape&, auto& v) { return subtract(v[0], v[1]); }});
  cases.push_back({"multiply",
                   [](auto& rng) {
                     auto r = dim(rng), c = dim(rng);
                     return std::vector{random_tensor(rng, r, c), random_tensor(rng, r, c)};
                   },
                   [](Tape&, auto& v) { return multiply(v[0], v[1]); }});
  cases.push_back({"add_bias",
                   [](auto& rng) {
                     auto r = dim(rng), c = dim(rng);
                     return std::vector{random_tensor(rng, r, c), random_tensor(rng, 1, c)};
                   },
                   [](Tape&, auto& v) { return add_bias(v[0], v[1]); }});
  cases.push_back({"matmul",
                   [](auto& rng) {
                     auto n = dim(rng), k = dim(rng), m = dim(rng);
                     return std::vector{random_tensor(rng, n, k), random_tensor(rng, k, m)};
                   },
                   [](Tape&, auto& v) { return matmul(v[0], v[1]); }});
  cases.push_back({"concat_cols",
                   [](auto& rng) {
                     auto r = dim(rng);
                     return std::vector{random_tensor(rng, r, dim(rng)), random_tensor(rng, r, dim(rng)),
                                        random_tensor(rng, r, dim(rng))};
                   },
                   [](Tape&, auto& v) { return concat_cols(v); }});
  cases.push_back({"concat_rows",
                   [](auto& rng) {
                     auto c = dim(rng);
                     return std::vector{random_tensor(rng, dim(rng), c), random_tensor(rng, dim(rng), c)};
                   },
                   [](Tape&, auto& v) { return concat_rows(v); }});
  cases.push_back({"gather_rows",
                   [](auto& rng) { return std::vector{random_tensor(rng, 4, dim(rng))}; },
                   [](Tape&, auto& v) {
                     const std::uint32_t rows[] = {3, 0, 3, 1, 3};
                     return gather_rows(v[0], rows);
                   }});
  cases.push_back({"scatter_add_rows",
                   [](auto& rng) { return std::vector{random_tensor(rng, 5, dim(rng))}; },
                   [](Tape&, auto& v) {
                     const std::uint32_t rows[] = {2, 0, 2, 2, 1};
                     return scatter_add_rows(v[0], rows, 4);
                   }});
  cases.push_back({"sum",
                   [](auto& rng) { return std::vector{random_tensor(rng, dim(rng), dim(rng))}; },
                   [](Tape&, auto& v) { return sum(v[0]); }});
  cases.push_back({"sum_cols",
                   [](auto& rng) { return std::vector{random_tensor(rng, dim(rng), dim(rng))}; },
                   [](Tape&, auto& v) { return sum_cols(v[0]); }});
  cases.push_back({"sigmoid",
                   [](auto& rng) { return std::vector{random_tensor(rng, dim(rng), dim(rng), -4, 4)}; },
                   [](Tape&, auto& v) { return sigmoid(v[0]); }});
  cases.push_back({"relu",
                   [](auto& rng) { return std::vector{random_tensor(rng, dim(rng), dim(rng))}; },
                   [](Tape&, auto& v) { return relu(v[0]); }});
  cases.push_back({"row_norm",
                   [](auto& rng) { return std::vector{random_tensor(rng, dim(rng), dim(rng))}; },
                   [](Tape&, auto& v) { return row_norm(v[0]); }});
  cases.push_back({"reciprocal_1p",
                   [](auto& rng) { return std::vector{random_tensor(rng, dim(rng), dim(rng), 0.0, 3.0)}; },
                   [](Tape&, auto& v) { return reciprocal_1p(v[0]); }});
  cases.push_back({"bce_loss",
                   [](auto& rng) { return std::vector{random_tensor(rng, dim(rng), 1, 0.05, 0.95)}; },
                   [](Tape&, auto& v) {
                     Tensor target(v[0].rows(), 1);
                     for (std::size_t i = 0; i < target.rows(); i += 2) target.at(i, 0) = 1.0;
                     return bce_loss(v[0], target);
                   }});
  cases.push_back({"composed",
                   [](auto& rng) {
                     auto n = dim(rng), k = dim(rng), m = dim(rng);
                     return std::vector{random_tensor(rng, n, k), random_tensor(rng, k, m),
                                        random_tensor(rng, 1, m), random_tensor(rng, n, k)};
                   },
                   [](Tape&, auto& v) {
                     auto h = relu(add_bias(matmul(v[0], v[1]), v[2]));
                     auto g = sigmoid(matmul(multiply(v[3], v[0]), v[1]));
                     const Var parts[] = {h, subtract(g, h)};
                     return add(reciprocal_1p(row_norm(concat_cols(parts))), sum_cols(g));
                   }});
  return cases;
}

}  // namespace gradcases

#pragma once

// Independent reference computations used by the unit and acceptance tests.
// Nothing here calls into the library under test.

#include <torch/torch.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

namespace oracle {

// Shapes

struct Shape {
  std::int64_t c = 0, h = 0, w = 0;
  bool operator==(const Shape&) const = default;
};

// Output length of a sliding window, counted by stepping the window start.
inline std::int64_t slide(std::int64_t in, int k, int s, int p) {
  std::int64_t n = 0;
  for (std::int64_t start = -p; start + k <= in + p; start += s) ++n;
  return n;
}

struct DenseSpec {
  int growth = 8;
  std::array<int, 4> blocks{3, 6, 12, 8};
  int init = 8;
  std::int64_t height = 64, width = 32;
};

struct WiringOracle {
  std::array<Shape, 5> taps;        // per stream
  std::array<Shape, 4> isdc_out;    // fused
  bool valid = true;
  int first_bad_tap = -1;           // index into taps of the first mismatch
};

// Walks the backbone one layer at a time, then checks every ISDC output
// against the following concatenated tap.
inline WiringOracle propagate(const DenseSpec& s) {
  WiringOracle o;
  Shape x{3, s.height, s.width};
  x = {s.init, slide(x.h, 7, 2, 3), slide(x.w, 7, 2, 3)};
  x = {x.c, slide(x.h, 3, 2, 1), slide(x.w, 3, 2, 1)};
  o.taps[0] = x;
  for (int b = 0; b < 4; ++b) {
    for (int l = 0; l < s.blocks[static_cast<std::size_t>(b)]; ++l) x.c += s.growth;
    if (b < 3) {
      x = {x.c / 2, slide(x.h, 2, 2, 0), slide(x.w, 2, 2, 0)};
      o.taps[static_cast<std::size_t>(b + 1)] = x;
    }
  }
  o.taps[4] = x;
  const int strides[4] = {2, 2, 2, 1};
  for (std::size_t n = 0; n < 5; ++n)
    if (o.taps[n].h < 1 || o.taps[n].w < 1 || o.taps[n].c < 1) {
      o.valid = false;
      o.first_bad_tap = static_cast<int>(n);
      return o;
    }
  for (std::size_t n = 0; n < 4; ++n) {
    const auto& t = o.taps[n];
    o.isdc_out[n] = {4 * t.c, slide(t.h, 3, strides[n], 1), slide(t.w, 3, strides[n], 1)};
    const auto& next = o.taps[n + 1];
    const Shape fused{2 * next.c, next.h, next.w};
    if (o.valid && !(o.isdc_out[n] == fused)) {
      o.valid = false;
      o.first_bad_tap = static_cast<int>(n + 1);
    }
  }
  return o;
}

// Retrieval

struct Ranked {
  bool valid = true;
  bool match = false;
};

// AP by enumerating every prefix of the valid list.
inline double brute_ap(const std::vector<Ranked>& list) {
  std::vector<bool> m;
  for (const auto& r : list)
    if (r.valid) m.push_back(r.match);
  double total = 0;
  int hits_total = 0;
  for (std::size_t k = 0; k < m.size(); ++k) {
    if (!m[k]) continue;
    ++hits_total;
    int hits = 0;
    for (std::size_t j = 0; j <= k; ++j) hits += m[j] ? 1 : 0;
    total += static_cast<double>(hits) / static_cast<double>(k + 1);
  }
  return hits_total ? total / hits_total : 0.0;
}

inline std::size_t brute_first(const std::vector<Ranked>& list) {
  std::size_t pos = 0;
  for (const auto& r : list) {
    if (!r.valid) continue;
    ++pos;
    if (r.match) return pos;
  }
  return 0;
}

inline double brute_cmc(const std::vector<std::vector<Ranked>>& queries, int n) {
  int hit = 0;
  for (const auto& q : queries) {
    const auto f = brute_first(q);
    if (f >= 1 && static_cast<int>(f) <= n) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(queries.size());
}

// Euclidean ranking by full sort over (distance, index) pairs.
inline std::vector<std::size_t> brute_order(const std::vector<double>& q, const std::vector<std::vector<double>>& g) {
  std::vector<std::pair<double, std::size_t>> d;
  for (std::size_t i = 0; i < g.size(); ++i) {
    double s = 0;
    for (std::size_t j = 0; j < q.size(); ++j) s += (q[j] - g[i][j]) * (q[j] - g[i][j]);
    d.push_back({std::sqrt(s), i});
  }
  std::sort(d.begin(), d.end());
  std::vector<std::size_t> out;
  for (auto& p : d) out.push_back(p.second);
  return out;
}

// Gradients

// Central finite differences of a scalar function of one tensor, evaluated
// in double precision.
inline torch::Tensor fd_gradient(const std::function<double(const torch::Tensor&)>& f, const torch::Tensor& x,
                                 double eps = 1e-6) {
  auto base = x.detach().to(torch::kFloat64).contiguous().clone();
  auto grad = torch::zeros_like(base);
  auto flat = base.view({-1});
  auto gflat = grad.view({-1});
  for (std::int64_t i = 0; i < flat.numel(); ++i) {
    const double v = flat[i].item<double>();
    flat[i] = v + eps;
    const double up = f(base);
    flat[i] = v - eps;
    const double down = f(base);
    flat[i] = v;
    gflat[i] = (up - down) / (2 * eps);
  }
  return grad;
}

// Same, restricted to the flat positions in `at`; other entries stay zero.
inline torch::Tensor fd_gradient_at(const std::function<double(const torch::Tensor&)>& f, const torch::Tensor& x,
                                    const std::vector<std::int64_t>& at, double eps = 1e-6) {
  auto base = x.detach().to(torch::kFloat64).contiguous().clone();
  auto grad = torch::zeros_like(base);
  auto flat = base.view({-1});
  auto gflat = grad.view({-1});
  for (auto i : at) {
    const double v = flat[i].item<double>();
    flat[i] = v + eps;
    const double up = f(base);
    flat[i] = v - eps;
    const double down = f(base);
    flat[i] = v;
    gflat[i] = (up - down) / (2 * eps);
  }
  return grad;
}

inline double relative_error(const torch::Tensor& analytic, const torch::Tensor& reference) {
  auto a = analytic.to(torch::kFloat64);
  auto r = reference.to(torch::kFloat64);
  const double denom = std::max(r.norm().item<double>(), 1e-8);
  return (a - r).norm().item<double>() / denom;
}

// Loss terms written directly from their definitions, element by element.

inline double mean_abs(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::fabs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

inline std::vector<double> values(const torch::Tensor& t) {
  auto c = t.detach().to(torch::kFloat64).contiguous();
  return {c.data_ptr<double>(), c.data_ptr<double>() + c.numel()};
}

}  // namespace oracle

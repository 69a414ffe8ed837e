// Test-only oracles: straightforward independent implementations used to
// cross-check the library. Nothing here calls into the code paths under
// test beyond evaluating forward values.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "core/tensor.hpp"

namespace oracle {

// Central finite difference of a scalar-valued closure with respect to one
// leaf tensor, element by element. The closure must re-run the forward pass
// from the leaf's current contents.
inline std::vector<double> finite_difference(dman::Tensor leaf, const std::function<double()>& value,
                                             double h = 1e-5) {
  std::vector<double> grad(leaf.size());
  auto data = leaf.mutable_values();
  for (size_t i = 0; i < data.size(); ++i) {
    const double orig = data[i];
    data[i] = orig + h;
    const double plus = value();
    data[i] = orig - h;
    const double minus = value();
    data[i] = orig;
    grad[i] = (plus - minus) / (2.0 * h);
  }
  return grad;
}

inline double rel_err(double a, double b) {
  const double scale = std::max(std::fabs(a), std::fabs(b));
  if (scale < 1e-7) return 0.0;
  return std::fabs(a - b) / scale;
}

inline double max_rel_err(std::span<const double> analytic, const std::vector<double>& fd) {
  double worst = 0.0;
  for (size_t i = 0; i < fd.size(); ++i) worst = std::max(worst, rel_err(analytic[i], fd[i]));
  return worst;
}

// Gradient of `build` w.r.t. `leaf` via the tape, compared against finite
// differences; returns the max relative error.
inline double check_gradient(dman::Tensor leaf, const std::function<dman::Tensor(dman::Tape&)>& build,
                             double h = 1e-5) {
  leaf.zero_grad();  // successive calls over shared leaves must not accumulate
  dman::Tape tape;
  dman::Tensor loss = build(tape);
  tape.backward(loss);
  std::vector<double> analytic(leaf.size(), 0.0);
  if (leaf.has_grad()) analytic.assign(leaf.grad().begin(), leaf.grad().end());
  auto value = [&] {
    dman::Tape probe(false);
    return build(probe).value();
  };
  const std::vector<double> fd = finite_difference(leaf, value, h);
  leaf.zero_grad();
  double worst = 0.0;
  for (size_t i = 0; i < fd.size(); ++i) worst = std::max(worst, rel_err(analytic[i], fd[i]));
  return worst;
}

// Multi-label confusion metrics by direct enumeration.
struct BruteMetrics {
  double micro_p, micro_r, micro_f1, macro_p, macro_r, macro_f1;
};

inline BruteMetrics brute_metrics(const std::vector<std::vector<double>>& probs,
                                  const std::vector<std::vector<int>>& truth, double threshold) {
  const size_t n = probs.size(), c = probs.empty() ? 0 : probs[0].size();
  auto f1 = [](double p, double r) { return p + r > 0 ? 2 * p * r / (p + r) : 0.0; };
  double tp = 0, fp = 0, fn = 0, mp = 0, mr = 0, mf = 0;
  for (size_t cls = 0; cls < c; ++cls) {
    double ctp = 0, cfp = 0, cfn = 0;
    for (size_t i = 0; i < n; ++i) {
      const bool pred = probs[i][cls] > threshold;
      const bool pos = truth[i][cls] != 0;
      if (pred && pos) ++ctp;
      if (pred && !pos) ++cfp;
      if (!pred && pos) ++cfn;
    }
    tp += ctp;
    fp += cfp;
    fn += cfn;
    const double p = ctp + cfp > 0 ? ctp / (ctp + cfp) : 0.0;
    const double r = ctp + cfn > 0 ? ctp / (ctp + cfn) : 0.0;
    mp += p;
    mr += r;
    mf += f1(p, r);
  }
  BruteMetrics m{};
  m.micro_p = tp + fp > 0 ? tp / (tp + fp) : 0.0;
  m.micro_r = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  m.micro_f1 = f1(m.micro_p, m.micro_r);
  m.macro_p = c ? mp / static_cast<double>(c) : 0.0;
  m.macro_r = c ? mr / static_cast<double>(c) : 0.0;
  m.macro_f1 = c ? mf / static_cast<double>(c) : 0.0;
  return m;
}

// Average precision of one class by the definition: mean over positives of
// precision at the positive's rank (descending score, ties by index).
inline double brute_average_precision(const std::vector<double>& scores, const std::vector<int>& truth) {
  const size_t n = scores.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return scores[a] > scores[b]; });
  double hits = 0, ap = 0, positives = 0;
  for (int t : truth) positives += t != 0;
  for (size_t rank = 0; rank < n; ++rank) {
    if (truth[order[rank]] != 0) {
      hits += 1;
      ap += hits / static_cast<double>(rank + 1);
    }
  }
  return positives > 0 ? ap / positives : 0.0;
}

inline double brute_map(const std::vector<std::vector<double>>& scores, const std::vector<std::vector<int>>& truth) {
  const size_t n = scores.size(), c = scores.empty() ? 0 : scores[0].size();
  double total = 0;
  size_t included = 0;
  for (size_t cls = 0; cls < c; ++cls) {
    std::vector<double> s(n);
    std::vector<int> t(n);
    size_t positives = 0;
    for (size_t i = 0; i < n; ++i) {
      s[i] = scores[i][cls];
      t[i] = truth[i][cls];
      positives += t[i] != 0;
    }
    if (positives == 0) continue;
    total += brute_average_precision(s, t);
    ++included;
  }
  return included ? total / static_cast<double>(included) : 0.0;
}

// p@k by exhaustive distance sort (ascending, ties by index).
inline double brute_p_at_k(const std::vector<std::vector<double>>& embeddings, const std::vector<double>& query,
                           const std::vector<int>& relevant, size_t k) {
  const size_t n = embeddings.size();
  std::vector<double> dist(n);
  for (size_t i = 0; i < n; ++i) {
    double d = 0;
    for (size_t j = 0; j < query.size(); ++j) {
      const double delta = embeddings[i][j] - query[j];
      d += delta * delta;
    }
    dist[i] = std::sqrt(d);
  }
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return dist[a] < dist[b]; });
  size_t hits = 0;
  for (size_t r = 0; r < k; ++r) hits += relevant[order[r]] != 0;
  return static_cast<double>(hits) / static_cast<double>(k);
}

}  // namespace oracle

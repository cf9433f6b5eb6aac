#pragma once

// Slow, loop-based reference computations. Nothing here calls the library's
// loss or metric code.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "ptgan/tensor.hpp"

namespace ptgan::oracle {

inline double adversarial(const Tensor<double>& s, bool real, bool least_squares) {
  const double t = real ? 1.0 : 0.0;
  double acc = 0;
  for (int c = 0; c < s.channels; ++c) {
    for (int y = 0; y < s.height; ++y) {
      for (int x = 0; x < s.width; ++x) {
        const double v = s.at(c, y, x);
        if (least_squares) {
          acc += (v - t) * (v - t);
        } else {
          const double p = 1.0 / (1.0 + std::exp(-v));
          acc += -(t * std::log(p) + (1 - t) * std::log(1 - p));
        }
      }
    }
  }
  return acc / (s.channels * s.height * s.width);
}

inline double mean_abs(const Tensor<double>& a, const Tensor<double>& b) {
  double acc = 0;
  for (int c = 0; c < a.channels; ++c)
    for (int y = 0; y < a.height; ++y)
      for (int x = 0; x < a.width; ++x) acc += std::fabs(a.at(c, y, x) - b.at(c, y, x));
  return acc / (a.channels * a.height * a.width);
}

/// sqrt(sum over pixels and channels of ((out - src) * m)^2) / (H * W)
inline double identity_term(const Tensor<double>& src, const Tensor<double>& out, const ForegroundMask<double>& m) {
  double sq = 0;
  for (int c = 0; c < src.channels; ++c) {
    for (int y = 0; y < src.height; ++y) {
      for (int x = 0; x < src.width; ++x) {
        const double d = (out.at(c, y, x) - src.at(c, y, x)) * m.weights(y, x);
        sq += d * d;
      }
    }
  }
  return std::sqrt(sq) / (src.height * src.width);
}

/// round(n * num / den), halves toward train, in exact integer arithmetic.
inline std::size_t split_count(std::size_t n, std::size_t num, std::size_t den) {
  return (2 * num * n + den) / (2 * den);
}

struct Retrieval {
  std::map<int, double> cmc;
  double map = 0.0;
  std::size_t answerable = 0;
};

/// Exhaustive metrics over a full distance matrix `dist[q][g]`, assuming no
/// ties. Rank of a gallery item = 1 + number of valid items strictly closer.
inline Retrieval retrieval(const std::vector<std::vector<double>>& dist, const std::vector<std::string>& q_id,
                           const std::vector<int>& q_cam, const std::vector<std::string>& g_id,
                           const std::vector<int>& g_cam, const std::vector<int>& ranks) {
  Retrieval r;
  std::vector<int> first;
  double ap_sum = 0;
  for (std::size_t q = 0; q < q_id.size(); ++q) {
    auto valid = [&](std::size_t g) { return !(g_id[g] == q_id[q] && g_cam[g] == q_cam[q]); };
    std::vector<int> rel_ranks;
    for (std::size_t g = 0; g < g_id.size(); ++g) {
      if (!valid(g) || g_id[g] != q_id[q]) continue;
      int rank = 1;
      for (std::size_t h = 0; h < g_id.size(); ++h) {
        if (valid(h) && dist[q][h] < dist[q][g]) ++rank;
      }
      rel_ranks.push_back(rank);
    }
    if (rel_ranks.empty()) continue;
    ++r.answerable;
    std::sort(rel_ranks.begin(), rel_ranks.end());
    first.push_back(rel_ranks.front());
    // precision at each relevant item's rank
    double ap = 0;
    for (int k : rel_ranks) {
      int relevant_at_or_above = 0;
      for (int j : rel_ranks) relevant_at_or_above += j <= k;
      ap += static_cast<double>(relevant_at_or_above) / k;
    }
    ap_sum += ap / static_cast<double>(rel_ranks.size());
  }
  for (int k : ranks) {
    int hits = 0;
    for (int f : first) hits += f <= k;
    r.cmc[k] = r.answerable ? static_cast<double>(hits) / static_cast<double>(r.answerable) : 0.0;
  }
  r.map = r.answerable ? ap_sum / static_cast<double>(r.answerable) : 0.0;
  return r;
}

}  // namespace ptgan::oracle

#pragma once

// Brute-force ranking oracle shared by the evaluator tests and the acceptance
// run. Ranks come from pairwise counting, never from a sort.

#include "fd/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace fd::test {

struct OracleResult {
  double rank1 = 0, map = 0;
  std::vector<double> cmc;
  int evaluated = 0, skipped = 0;
};

// Counting-based oracle: the rank of an entry is the number of kept entries
// that beat it (strictly higher score, or equal score and lower index). No
// sorting is involved.
inline OracleResult oracle(const GalleryIndex& q, const GalleryIndex& g, std::size_t depth) {
  auto cos = [](const auto& a, const auto& b) {
    double d = 0, na = 0, nb = 0;
    for (Index k = 0; k < a.size(); ++k) {
      d += double(a(k)) * double(b(k));
      na += double(a(k)) * double(a(k));
      nb += double(b(k)) * double(b(k));
    }
    return d / std::sqrt(na * nb);
  };
  OracleResult r;
  r.cmc.assign(depth, 0.0);
  for (Index i = 0; i < q.size(); ++i) {
    std::vector<Index> kept;
    std::vector<double> score;
    for (Index j = 0; j < g.size(); ++j) {
      const auto gj = static_cast<std::size_t>(j);
      if (g.identity[gj] == -1) continue;
      if (g.identity[gj] == q.identity[static_cast<std::size_t>(i)] && g.camera[gj] == q.camera[static_cast<std::size_t>(i)])
        continue;
      kept.push_back(j);
      score.push_back(cos(q.features.col(i), g.features.col(j)));
    }
    std::vector<std::size_t> rank(kept.size(), 0);
    for (std::size_t a = 0; a < kept.size(); ++a)
      for (std::size_t b = 0; b < kept.size(); ++b)
        if (score[b] > score[a] || (score[b] == score[a] && b < a)) ++rank[a];
    std::vector<std::size_t> rel_ranks;
    for (std::size_t a = 0; a < kept.size(); ++a)
      if (g.identity[static_cast<std::size_t>(kept[a])] == q.identity[static_cast<std::size_t>(i)])
        rel_ranks.push_back(rank[a]);
    if (rel_ranks.empty()) {
      ++r.skipped;
      continue;
    }
    ++r.evaluated;
    std::sort(rel_ranks.begin(), rel_ranks.end());
    double ap = 0;
    for (std::size_t h = 0; h < rel_ranks.size(); ++h) ap += double(h + 1) / double(rel_ranks[h] + 1);
    r.map += ap / double(rel_ranks.size());
    r.rank1 += rel_ranks.front() == 0;
    for (std::size_t k = rel_ranks.front(); k < depth; ++k) r.cmc[k] += 1;
  }
  r.map /= r.evaluated;
  r.rank1 /= r.evaluated;
  for (double& c : r.cmc) c /= r.evaluated;
  return r;
}

inline GalleryIndex random_index(std::mt19937_64& rng, Index n, Index dim, int ids, int cams, double junk_rate,
                          bool ties) {
  std::normal_distribution<float> nd;
  std::uniform_int_distribution<int> id(0, ids - 1), cam(1, cams);
  std::bernoulli_distribution junk(junk_rate);
  // Tied trials draw every column from a fixed pool of four vectors, so equal
  // scores are bit-identical rather than merely equal in exact arithmetic.
  std::mt19937_64 pool_rng(99);
  Matrix<float> pool(dim, 4);
  for (Index i = 0; i < pool.size(); ++i) pool.data()[i] = nd(pool_rng);
  std::uniform_int_distribution<Index> pick(0, 3);
  GalleryIndex g;
  g.features.resize(dim, n);
  for (Index i = 0; i < n; ++i) {
    if (ties)
      g.features.col(i) = pool.col(pick(rng));
    else
      for (Index k = 0; k < dim; ++k) g.features(k, i) = nd(rng);
    g.identity.push_back(junk(rng) ? -1 : id(rng));
    g.camera.push_back(cam(rng));
  }
  return g;
}

}  // namespace fd::test

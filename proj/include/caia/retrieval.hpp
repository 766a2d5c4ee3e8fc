#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "caia/align.hpp"

namespace caia {

struct PerClassHits {
  std::size_t class_id = 0;
  std::size_t hits_top1 = 0;
  std::size_t total = 0;
};

struct RetrievalResult {
  std::vector<std::size_t> k_list;
  std::vector<double> topk;  // parallel to k_list
  std::vector<PerClassHits> per_class;
  std::vector<std::vector<std::size_t>> rankings;  // per query, candidate order

  double top_at(std::size_t k) const {
    for (std::size_t i = 0; i < k_list.size(); ++i) {
      if (k_list[i] == k) return topk[i];
    }
    throw std::invalid_argument("RetrievalResult: k not evaluated");
  }
};

/// Ranks candidates per query row of a similarity matrix (descending, ties
/// broken by the lowest candidate index) and scores top-k hits.
inline RetrievalResult evaluate_retrieval_from_sims(const std::vector<double>& sims,
                                                    std::size_t n_queries, std::size_t n_candidates,
                                                    const std::vector<std::size_t>& true_candidate,
                                                    const std::vector<std::size_t>& query_class,
                                                    const std::vector<std::size_t>& k_list) {
  if (n_candidates == 0) throw std::invalid_argument("evaluate_retrieval: empty candidate set");
  if (true_candidate.size() != n_queries || sims.size() != n_queries * n_candidates) {
    throw std::invalid_argument("evaluate_retrieval: size mismatch");
  }
  RetrievalResult res;
  res.k_list = k_list;
  res.topk.assign(k_list.size(), 0.0);
  res.rankings.resize(n_queries);

  std::vector<std::size_t> order(n_candidates);
  std::vector<std::size_t> rank_of_true(n_queries);
  for (std::size_t q = 0; q < n_queries; ++q) {
    std::iota(order.begin(), order.end(), 0);
    const double* row = sims.data() + q * n_candidates;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (row[a] != row[b]) return row[a] > row[b];
      return a < b;
    });
    res.rankings[q] = order;
    rank_of_true[q] =
        std::find(order.begin(), order.end(), true_candidate[q]) - order.begin();
  }

  for (std::size_t ki = 0; ki < k_list.size(); ++ki) {
    std::size_t hits = 0;
    for (std::size_t q = 0; q < n_queries; ++q) {
      if (rank_of_true[q] < k_list[ki]) ++hits;
    }
    res.topk[ki] = n_queries ? static_cast<double>(hits) / n_queries : 0.0;
  }

  // Per-class top-1 tallies keyed by the query's class label.
  for (std::size_t q = 0; q < n_queries; ++q) {
    const std::size_t cls = q < query_class.size() ? query_class[q] : 0;
    auto it = std::find_if(res.per_class.begin(), res.per_class.end(),
                           [&](const PerClassHits& p) { return p.class_id == cls; });
    if (it == res.per_class.end()) {
      res.per_class.push_back({cls, 0, 0});
      it = res.per_class.end() - 1;
    }
    it->total += 1;
    if (rank_of_true[q] == 0) it->hits_top1 += 1;
  }
  std::sort(res.per_class.begin(), res.per_class.end(),
            [](const PerClassHits& a, const PerClassHits& b) { return a.class_id < b.class_id; });
  return res;
}

/// Fixed-candidate variant: one embedding per candidate, cosine ranking.
inline RetrievalResult evaluate_retrieval(const std::vector<Embedding>& queries,
                                          const std::vector<Embedding>& candidates,
                                          const std::vector<std::size_t>& true_candidate,
                                          const std::vector<std::size_t>& query_class,
                                          const std::vector<std::size_t>& k_list) {
  if (candidates.empty()) throw std::invalid_argument("evaluate_retrieval: empty candidate set");
  const std::size_t nq = queries.size(), nc = candidates.size();
  std::vector<double> sims(nq * nc);
  for (std::size_t q = 0; q < nq; ++q) {
    for (std::size_t c = 0; c < nc; ++c) {
      double dot = 0.0, nz = 0.0, ny = 0.0;
      for (std::size_t k = 0; k < queries[q].size(); ++k) {
        dot += queries[q][k] * candidates[c][k];
        nz += queries[q][k] * queries[q][k];
        ny += candidates[c][k] * candidates[c][k];
      }
      sims[q * nc + c] = dot / std::sqrt(nz * ny);
    }
  }
  return evaluate_retrieval_from_sims(sims, nq, nc, true_candidate, query_class, k_list);
}

struct HistogramRow {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
};

struct SimilarityHistogram {
  std::vector<HistogramRow> rows;
  CalibrationStats stats;
  double outlier_fraction = 0.0;
};

/// Equal-width bins over [-1, 1] plus the confidence interval of the batch.
inline SimilarityHistogram similarity_histogram(const std::vector<double>& s, std::size_t bins,
                                                double alpha) {
  if (bins < 2) throw std::invalid_argument("similarity_histogram: need at least two bins");
  SimilarityHistogram out;
  out.rows.resize(bins);
  const double width = 2.0 / static_cast<double>(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    out.rows[b].lo = -1.0 + b * width;
    out.rows[b].hi = -1.0 + (b + 1) * width;
  }
  for (double v : s) {
    long long idx = static_cast<long long>((v + 1.0) / width);
    idx = std::clamp<long long>(idx, 0, static_cast<long long>(bins) - 1);
    out.rows[idx].count += 1;
  }
  out.stats = batch_stats(s, alpha);
  out.outlier_fraction = static_cast<double>(out.stats.outlier_count) / s.size();
  return out;
}

}  // namespace caia

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "owlsnm/dataset.hpp"

namespace owlsnm {

// The k classes a retrieval model answers with, kept sorted by id.
struct PredictionSet {
  std::vector<std::int32_t> classes;

  bool contains(std::int32_t y) const;
  std::size_t size() const { return classes.size(); }
};

// Indices of the k largest scores, ties broken by ascending class id.
// Bounded min-heap selection, O(K log k).
PredictionSet top_k(std::span<const double> v, int k);

// Same selection but returning ids in rank order (best first); prefixes
// give top_k for every smaller k.
std::vector<std::int32_t> top_k_ranked(std::span<const double> v, int k);

// The 0/1 retrieval loss: 1 iff y is outside the predicted set.
int retrieval_loss(const PredictionSet& s, std::int32_t y);

// v_y minus the k-th largest remaining score. A margin <= 0 counts as a
// retrieval error, including exact ties at rank k.
double margin(std::span<const double> v, std::int32_t y, int k);

// Fraction of examples with margin <= rho.
double margin_risk(const std::vector<std::vector<double>>& scores,
                   const std::vector<std::int32_t>& labels, int k, double rho);

struct MetricsReport {
  std::map<int, double> recall_at;
  std::map<int, double> precision_at;
  // Mean 0/1 retrieval loss of a uniformly sampled positive, per k.
  std::map<int, double> retrieval_error_at;
  std::size_t n_examples = 0;

  // One JSON object per k:
  //   {"k":..,"recall":..,"precision":..,"retrieval_error":..,"n":..}
  std::string to_json_lines() const;
};

// Partial report over a slice of examples; partials merge associatively,
// so per-example evaluation can run on any number of workers.
class MetricsAccumulator {
 public:
  explicit MetricsAccumulator(std::vector<int> ks);

  void add(std::span<const double> scores,
           const std::vector<std::int32_t>& labels,
           std::int32_t sampled_positive);
  void merge(const MetricsAccumulator& other);
  MetricsReport report() const;  // throws if no examples were added

  const std::vector<int>& ks() const { return ks_; }

 private:
  std::vector<int> ks_;
  std::vector<double> hit_sum_, recall_sum_, error_sum_;
  std::size_t n_ = 0;
};

using Scorer = std::function<std::vector<double>(const SparseExample&)>;

// Scores every example, samples one positive per example (deterministic in
// `seed`), and averages P@k, R@k against the full label set plus the 0/1
// retrieval error of the sampled positive.
MetricsReport evaluate_metrics(const Scorer& scorer, const Dataset& ds,
                               const std::vector<int>& ks,
                               std::uint64_t seed = 0, int threads = 1);

}  // namespace owlsnm

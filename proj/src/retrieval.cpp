#include "owlsnm/retrieval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <queue>
#include <stdexcept>
#include <thread>

#include "json.hpp"

namespace owlsnm {

namespace {

struct Entry {
  double score;
  std::int32_t id;
};

// "a outranks b": larger score first, smaller id at ties.
bool outranks(const Entry& a, const Entry& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.id < b.id;
}

}  // namespace

bool PredictionSet::contains(std::int32_t y) const {
  return std::binary_search(classes.begin(), classes.end(), y);
}

std::vector<std::int32_t> top_k_ranked(std::span<const double> v, int k) {
  const auto K = static_cast<std::int64_t>(v.size());
  if (k < 1 || k > K) {
    throw std::invalid_argument("top_k: need 1 <= k <= K");
  }
  // Heap of the k best seen so far with the weakest on top.
  std::priority_queue<Entry, std::vector<Entry>, decltype(&outranks)> heap(
      &outranks);
  for (std::int64_t i = 0; i < K; ++i) {
    Entry e{v[i], static_cast<std::int32_t>(i + 1)};
    if (static_cast<int>(heap.size()) < k) {
      heap.push(e);
    } else if (outranks(e, heap.top())) {
      heap.pop();
      heap.push(e);
    }
  }
  std::vector<std::int32_t> ranked(k);
  for (int i = k - 1; i >= 0; --i) {
    ranked[i] = heap.top().id;
    heap.pop();
  }
  return ranked;
}

PredictionSet top_k(std::span<const double> v, int k) {
  PredictionSet s;
  s.classes = top_k_ranked(v, k);
  std::sort(s.classes.begin(), s.classes.end());
  return s;
}

int retrieval_loss(const PredictionSet& s, std::int32_t y) {
  return s.contains(y) ? 0 : 1;
}

double margin(std::span<const double> v, std::int32_t y, int k) {
  const auto K = static_cast<std::int64_t>(v.size());
  if (y < 1 || y > K) throw std::invalid_argument("margin: class id out of range");
  if (k < 1 || k > K - 1) {
    throw std::invalid_argument("margin: need 1 <= k <= K-1");
  }
  std::vector<double> rest;
  rest.reserve(K - 1);
  for (std::int64_t i = 0; i < K; ++i) {
    if (i + 1 != y) rest.push_back(v[i]);
  }
  std::nth_element(rest.begin(), rest.begin() + (k - 1), rest.end(),
                   [](double a, double b) { return a > b; });
  return v[y - 1] - rest[k - 1];
}

double margin_risk(const std::vector<std::vector<double>>& scores,
                   const std::vector<std::int32_t>& labels, int k,
                   double rho) {
  if (!(rho >= 0.0)) throw std::invalid_argument("margin_risk: rho must be >= 0");
  if (scores.size() != labels.size() || scores.empty()) {
    throw std::invalid_argument("margin_risk: need matching nonempty inputs");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (margin(scores[i], labels[i], k) <= rho) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(scores.size());
}

MetricsAccumulator::MetricsAccumulator(std::vector<int> ks)
    : ks_(std::move(ks)),
      hit_sum_(ks_.size(), 0.0),
      recall_sum_(ks_.size(), 0.0),
      error_sum_(ks_.size(), 0.0) {
  if (ks_.empty()) throw std::invalid_argument("metrics: need at least one k");
  for (int k : ks_) {
    if (k < 1) throw std::invalid_argument("metrics: k must be positive");
  }
}

void MetricsAccumulator::add(std::span<const double> scores,
                             const std::vector<std::int32_t>& labels,
                             std::int32_t sampled_positive) {
  const int kmax = *std::max_element(ks_.begin(), ks_.end());
  const auto ranked = top_k_ranked(scores, kmax);
  for (std::size_t t = 0; t < ks_.size(); ++t) {
    const int k = ks_[t];
    std::size_t hits = 0;
    bool positive_in = false;
    for (int j = 0; j < k; ++j) {
      if (std::binary_search(labels.begin(), labels.end(), ranked[j])) ++hits;
      if (ranked[j] == sampled_positive) positive_in = true;
    }
    hit_sum_[t] += static_cast<double>(hits) / k;
    recall_sum_[t] += static_cast<double>(hits) / labels.size();
    error_sum_[t] += positive_in ? 0.0 : 1.0;
  }
  ++n_;
}

void MetricsAccumulator::merge(const MetricsAccumulator& other) {
  if (other.ks_ != ks_) {
    throw std::invalid_argument("metrics: cannot merge mismatched ks");
  }
  for (std::size_t t = 0; t < ks_.size(); ++t) {
    hit_sum_[t] += other.hit_sum_[t];
    recall_sum_[t] += other.recall_sum_[t];
    error_sum_[t] += other.error_sum_[t];
  }
  n_ += other.n_;
}

MetricsReport MetricsAccumulator::report() const {
  if (n_ == 0) throw std::invalid_argument("metrics: empty dataset");
  MetricsReport r;
  r.n_examples = n_;
  for (std::size_t t = 0; t < ks_.size(); ++t) {
    const auto n = static_cast<double>(n_);
    r.precision_at[ks_[t]] = hit_sum_[t] / n;
    r.recall_at[ks_[t]] = recall_sum_[t] / n;
    r.retrieval_error_at[ks_[t]] = error_sum_[t] / n;
  }
  return r;
}

std::string MetricsReport::to_json_lines() const {
  std::string out;
  for (const auto& [k, recall] : recall_at) {
    nlohmann::json j;
    j["k"] = k;
    j["recall"] = recall;
    j["precision"] = precision_at.at(k);
    j["retrieval_error"] = retrieval_error_at.at(k);
    j["n"] = n_examples;
    out += j.dump();
    out += '\n';
  }
  return out;
}

MetricsReport evaluate_metrics(const Scorer& scorer, const Dataset& ds,
                               const std::vector<int>& ks, std::uint64_t seed,
                               int threads) {
  if (ds.examples.empty()) {
    throw std::invalid_argument("evaluate_metrics: empty dataset");
  }
  const std::size_t n = ds.examples.size();
  // Fixed chunk grid: results are bitwise identical for any thread count.
  const std::size_t n_chunks = std::min<std::size_t>(64, n);
  std::vector<MetricsAccumulator> parts(n_chunks, MetricsAccumulator(ks));
  Rng root(seed);

  const auto run_chunk = [&](std::size_t c) {
    const std::size_t lo = n * c / n_chunks;
    const std::size_t hi = n * (c + 1) / n_chunks;
    for (std::size_t i = lo; i < hi; ++i) {
      const auto& ex = ds.examples[i];
      Rng ex_rng = root.split(i);
      const auto scores = scorer(ex);
      parts[c].add(scores, ex.labels, sample_positive(ex, ex_rng));
    }
  };

  threads = std::max(1, threads);
  if (threads == 1) {
    for (std::size_t c = 0; c < n_chunks; ++c) run_chunk(c);
  } else {
    std::vector<std::thread> pool;
    std::atomic<std::size_t> next{0};
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t c = next++; c < n_chunks; c = next++) run_chunk(c);
      });
    }
    for (auto& th : pool) th.join();
  }

  MetricsAccumulator total = parts[0];
  for (std::size_t c = 1; c < n_chunks; ++c) total.merge(parts[c]);
  return total.report();
}

}  // namespace owlsnm

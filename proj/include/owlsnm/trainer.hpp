#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "owlsnm/dataset.hpp"
#include "owlsnm/model.hpp"
#include "owlsnm/phi.hpp"
#include "owlsnm/retrieval.hpp"
#include "owlsnm/snm.hpp"

namespace owlsnm {

enum class ResamplePolicy { once, per_epoch };

struct TrainConfig {
  int epochs = 10;
  int batch_size = 32;
  double lr_embed = 1.0;    // plain SGD on W1 and the class table
  double lr_linear = 0.05;  // SGD with momentum on W2
  double momentum = 0.9;
  SnmConfig snm;
  PhiSpec phi = PhiSpec::hinge();
  int eval_every = 0;  // optimizer steps between snapshots; 0 = none
  std::uint64_t seed = 0;
  ResamplePolicy resample_positives = ResamplePolicy::per_epoch;
  std::vector<int> eval_ks = {1};
  int embed_dim = 64;  // e; the paper-scale value is 512

  void validate(std::int32_t K) const;
};

// Flat key=value config (phi, rho, kind, B, k, strategy, epochs,
// batch_size, lr_embed, lr_linear, momentum, eval_every, seed,
// resample_positives, eval_ks). The strategy token is compiled against K.
TrainConfig load_train_config(std::istream& in, std::int32_t K);
TrainConfig load_train_config(const std::string& path, std::int32_t K);

struct TrainResult {
  std::vector<MetricsReport> history;
};

// SGD per the sampled-estimator recipe: every step draws one positive and
// B candidate negatives, so the work touches B+1 class rows regardless of
// K. Gradients are averaged over batch_size examples per update. Fully
// deterministic given cfg.seed; positive draws depend only on
// (seed, epoch, example), so runs differing in vartheta see identical
// positives. Snapshots are taken on eval_data every eval_every steps when
// provided.
TrainResult train(const Dataset& data, EmbeddingModel& model,
                  const TrainConfig& cfg, const Dataset* eval_data = nullptr);

MetricsReport evaluate(const EmbeddingModel& model, const Dataset& data,
                       const std::vector<int>& ks, int threads = 1);

struct NamedStrategy {
  std::string name;  // "negsample" marks the normalization baseline
  WeightVector vartheta;
};

struct StrategyOutcome {
  std::string name;
  std::vector<MetricsReport> per_seed;
};

struct CompareResult {
  std::vector<StrategyOutcome> strategies;
  std::vector<int> ks;
  std::size_t baseline = 0;  // index of the negative-sampling row

  // Per-seed recall ratio strategy/baseline at k.
  std::vector<double> recall_ratios(std::size_t strategy, int k) const;
  std::vector<double> precision_ratios(std::size_t strategy, int k) const;

  // One JSON line per (strategy, k) with mean metrics and mean ratios.
  std::string to_json_lines() const;
};

// Trains one model per (strategy, seed) from an identical initialization
// and identical example/positive/candidate draws, evaluates on test data,
// and reports metrics normalized by the negative-sampling row.
CompareResult compare_strategies(const Dataset& train_data,
                                 const Dataset& test_data,
                                 const TrainConfig& base,
                                 const std::vector<NamedStrategy>& strategies,
                                 const std::vector<std::uint64_t>& seeds);

}  // namespace owlsnm

#include "owlsnm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace owlsnm {

namespace {

// Stream ids for deriving per-purpose generators from the master seed.
enum Purpose : std::uint64_t {
  kShuffle = 1,
  kPositives = 2,
  kCandidates = 3,
};

Rng stream(std::uint64_t seed, std::uint64_t purpose, std::uint64_t epoch) {
  return Rng(seed).split(purpose).split(epoch);
}

// Sparse per-batch gradient accumulator; keys iterate in id order so the
// parameter update order is deterministic.
struct BatchGrad {
  std::map<std::int32_t, std::vector<double>> w1_rows;
  std::map<std::int32_t, std::vector<double>> c_rows;
  std::vector<double> w2;
  int count = 0;

  void add(const ModelGrad& g, std::size_t e) {
    if (w2.empty()) w2.assign(e * e, 0.0);
    for (std::size_t i = 0; i < w2.size(); ++i) w2[i] += g.w2[i];
    const auto accumulate = [e](std::map<std::int32_t, std::vector<double>>& m,
                                const auto& rows) {
      for (const auto& [id, grad] : rows) {
        auto [it, fresh] = m.try_emplace(id);
        if (fresh) it->second.assign(e, 0.0);
        for (std::size_t a = 0; a < e; ++a) it->second[a] += grad[a];
      }
    };
    accumulate(w1_rows, g.w1_rows);
    accumulate(c_rows, g.c_rows);
    ++count;
  }

  void clear() {
    w1_rows.clear();
    c_rows.clear();
    if (!w2.empty()) std::fill(w2.begin(), w2.end(), 0.0);
    count = 0;
  }
};

}  // namespace

void TrainConfig::validate(std::int32_t K) const {
  if (epochs < 0) throw std::invalid_argument("train: epochs must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (!(lr_embed > 0.0) || !(lr_linear > 0.0)) {
    throw std::invalid_argument("train: learning rates must be positive");
  }
  if (!(momentum >= 0.0) || !(momentum < 1.0)) {
    throw std::invalid_argument("train: momentum must be in [0, 1)");
  }
  if (eval_every < 0) throw std::invalid_argument("train: eval_every must be >= 0");
  if (eval_ks.empty()) throw std::invalid_argument("train: need eval ks");
  snm.validate(K);
}

TrainResult train(const Dataset& data, EmbeddingModel& model,
                  const TrainConfig& cfg, const Dataset* eval_data) {
  cfg.validate(model.K);
  if (data.n_features > model.d || data.n_labels > model.K) {
    throw std::invalid_argument("train: dataset does not fit the model");
  }
  for (const auto& ex : data.examples) {
    if (ex.labels.empty()) throw std::invalid_argument("train: unlabeled example");
  }
  const std::size_t n = data.examples.size();
  const std::size_t e = model.e;

  TrainResult result;
  std::vector<double> w2_velocity(e * e, 0.0);
  std::vector<std::int32_t> positives(n, 0);
  std::vector<std::size_t> order(n);
  BatchGrad batch;
  long long steps = 0;

  const auto apply_update = [&] {
    if (batch.count == 0) return;
    const double inv = 1.0 / batch.count;
    for (const auto& [fid, g] : batch.w1_rows) {
      double* row = model.w1.data() + static_cast<std::size_t>(fid) * e;
      for (std::size_t a = 0; a < e; ++a) row[a] -= cfg.lr_embed * inv * g[a];
    }
    for (const auto& [cid, g] : batch.c_rows) {
      double* row = model.c.data() + static_cast<std::size_t>(cid - 1) * e;
      for (std::size_t a = 0; a < e; ++a) row[a] -= cfg.lr_embed * inv * g[a];
    }
    for (std::size_t i = 0; i < e * e; ++i) {
      w2_velocity[i] = cfg.momentum * w2_velocity[i] + inv * batch.w2[i];
      model.w2[i] -= cfg.lr_linear * w2_velocity[i];
    }
    batch.clear();
    ++steps;
    if (eval_data && cfg.eval_every > 0 && steps % cfg.eval_every == 0) {
      result.history.push_back(evaluate(model, *eval_data, cfg.eval_ks));
    }
  };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (epoch == 0 || cfg.resample_positives == ResamplePolicy::per_epoch) {
      const std::uint64_t pos_epoch =
          cfg.resample_positives == ResamplePolicy::once ? 0 : epoch;
      Rng pos_rng = stream(cfg.seed, kPositives, pos_epoch);
      for (std::size_t i = 0; i < n; ++i) {
        positives[i] = sample_positive(data.examples[i], pos_rng);
      }
    }
    Rng shuffle_rng = stream(cfg.seed, kShuffle, epoch);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (std::size_t i = n; i > 1; --i) {
      std::swap(order[i - 1], order[shuffle_rng.below(i)]);
    }
    Rng cand_rng = stream(cfg.seed, kCandidates, epoch);

    for (std::size_t t = 0; t < n; ++t) {
      const auto& ex = data.examples[order[t]];
      const std::int32_t y = positives[order[t]];
      const auto u = embed_input(model, ex.features);
      const ScoreFn score = [&model, &u](std::int32_t id) {
        return score_embedded(model, u, id);
      };
      const SnmGrad g = snm_grad(cfg.snm, cfg.phi, model.K, score, y, cand_rng);
      if (!std::isfinite(g.value)) {
        throw std::runtime_error(
            "train: non-finite loss at epoch " + std::to_string(epoch) +
            ", example " + std::to_string(order[t]));
      }
      batch.add(backward(model, ex.features, g.entries), e);
      if (batch.count == cfg.batch_size) apply_update();
    }
    apply_update();  // epoch-end remainder
  }
  return result;
}

MetricsReport evaluate(const EmbeddingModel& model, const Dataset& data,
                       const std::vector<int>& ks, int threads) {
  const Scorer scorer = [&model](const SparseExample& ex) {
    return score_all(model, ex.features);
  };
  return evaluate_metrics(scorer, data, ks, /*seed=*/0, threads);
}

std::vector<double> CompareResult::recall_ratios(std::size_t strategy,
                                                 int k) const {
  std::vector<double> out;
  const auto& base = strategies[baseline].per_seed;
  const auto& row = strategies[strategy].per_seed;
  for (std::size_t s = 0; s < row.size(); ++s) {
    out.push_back(row[s].recall_at.at(k) / base[s].recall_at.at(k));
  }
  return out;
}

std::vector<double> CompareResult::precision_ratios(std::size_t strategy,
                                                    int k) const {
  std::vector<double> out;
  const auto& base = strategies[baseline].per_seed;
  const auto& row = strategies[strategy].per_seed;
  for (std::size_t s = 0; s < row.size(); ++s) {
    out.push_back(row[s].precision_at.at(k) / base[s].precision_at.at(k));
  }
  return out;
}

std::string CompareResult::to_json_lines() const {
  std::string out;
  const auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  for (std::size_t si = 0; si < strategies.size(); ++si) {
    for (int k : ks) {
      std::vector<double> recalls, precisions;
      for (const auto& rep : strategies[si].per_seed) {
        recalls.push_back(rep.recall_at.at(k));
        precisions.push_back(rep.precision_at.at(k));
      }
      nlohmann::json j;
      j["strategy"] = strategies[si].name;
      j["k"] = k;
      j["seeds"] = strategies[si].per_seed.size();
      j["recall"] = mean(recalls);
      j["precision"] = mean(precisions);
      j["recall_ratio"] = mean(recall_ratios(si, k));
      j["precision_ratio"] = mean(precision_ratios(si, k));
      out += j.dump();
      out += '\n';
    }
  }
  return out;
}

CompareResult compare_strategies(const Dataset& train_data,
                                 const Dataset& test_data,
                                 const TrainConfig& base,
                                 const std::vector<NamedStrategy>& strategies,
                                 const std::vector<std::uint64_t>& seeds) {
  if (strategies.empty() || seeds.empty()) {
    throw std::invalid_argument("compare: need strategies and seeds");
  }
  for (const auto& s : strategies) {
    if (s.vartheta.size() != static_cast<std::size_t>(base.snm.B)) {
      throw std::invalid_argument("compare: strategies must share B");
    }
  }
  CompareResult result;
  result.ks = base.eval_ks;
  result.baseline = 0;
  for (std::size_t i = 0; i < strategies.size(); ++i) {
    if (strategies[i].name == "negsample") result.baseline = i;
    result.strategies.push_back({strategies[i].name, {}});
  }

  const std::int32_t K = train_data.n_labels;
  const std::int32_t d = train_data.n_features;
  for (std::uint64_t seed : seeds) {
    const EmbeddingModel init =
        init_model(d, base.embed_dim, K, Rng(seed).split(17).next_u64());
    for (std::size_t si = 0; si < strategies.size(); ++si) {
      TrainConfig cfg = base;
      cfg.seed = seed;
      cfg.snm.vartheta = strategies[si].vartheta;
      EmbeddingModel model = init;
      train(train_data, model, cfg);
      result.strategies[si].per_seed.push_back(
          evaluate(model, test_data, base.eval_ks));
    }
  }
  return result;
}

namespace {

std::map<std::string, std::string> parse_kv(std::istream& in) {
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    // Strip comments and surrounding whitespace.
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    line = line.substr(first, last - first + 1);
    const auto eq = line.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": expected key=value");
    }
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

}  // namespace

TrainConfig load_train_config(std::istream& in, std::int32_t K) {
  auto kv = parse_kv(in);
  TrainConfig cfg;
  const auto take = [&kv](const std::string& key) {
    const auto it = kv.find(key);
    if (it == kv.end()) return std::string();
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  std::string v;
  double rho = 1.0;
  if (!(v = take("rho")).empty()) rho = std::stod(v);
  if (!(v = take("phi")).empty()) cfg.phi = PhiSpec::parse(v, rho);
  if (!(v = take("kind")).empty()) cfg.snm.kind = parse_loss_kind(v);
  if (!(v = take("B")).empty()) cfg.snm.B = std::stoi(v);
  if (!(v = take("k")).empty()) cfg.snm.k = std::stoi(v);
  const std::string strategy = take("strategy");
  if (!(v = take("epochs")).empty()) cfg.epochs = std::stoi(v);
  if (!(v = take("batch_size")).empty()) cfg.batch_size = std::stoi(v);
  if (!(v = take("lr_embed")).empty()) cfg.lr_embed = std::stod(v);
  if (!(v = take("lr_linear")).empty()) cfg.lr_linear = std::stod(v);
  if (!(v = take("momentum")).empty()) cfg.momentum = std::stod(v);
  if (!(v = take("eval_every")).empty()) cfg.eval_every = std::stoi(v);
  if (!(v = take("embed_dim")).empty()) cfg.embed_dim = std::stoi(v);
  if (!(v = take("seed")).empty()) cfg.seed = std::stoull(v);
  if (!(v = take("resample_positives")).empty()) {
    if (v == "once") {
      cfg.resample_positives = ResamplePolicy::once;
    } else if (v == "per_epoch") {
      cfg.resample_positives = ResamplePolicy::per_epoch;
    } else {
      throw std::invalid_argument("config: resample_positives must be once|per_epoch");
    }
  }
  if (!(v = take("eval_ks")).empty()) {
    cfg.eval_ks.clear();
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) cfg.eval_ks.push_back(std::stoi(item));
  }
  if (!kv.empty()) {
    throw std::invalid_argument("config: unknown key '" + kv.begin()->first + "'");
  }
  cfg.snm.vartheta = vartheta_from_strategy(
      strategy.empty() ? "topk" : strategy, K, cfg.snm.B, cfg.snm.k);
  return cfg;
}

TrainConfig load_train_config(const std::string& path, std::int32_t K) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  return load_train_config(f, K);
}

}  // namespace owlsnm

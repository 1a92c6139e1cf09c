#include "owlsnm/snm.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace owlsnm {

namespace {

// Neumaier-compensated accumulator; the enumeration oracle sums up to 1e6
// terms and is compared against a single-pass evaluation at 1e-12.
struct KahanSum {
  double s = 0.0, c = 0.0;
  void add(double x) {
    const double t = s + x;
    if (std::abs(s) >= std::abs(x)) {
      c += (s - t) + x;
    } else {
      c += (x - t) + s;
    }
    s = t;
  }
  double total() const { return s + c; }
};

bool rank_before(const std::pair<std::int32_t, double>& a,
                 const std::pair<std::int32_t, double>& b) {
  if (a.second != b.second) return a.second > b.second;
  return a.first < b.first;
}

std::size_t support_len(const WeightVector& w) {
  std::size_t m = w.size();
  while (m > 0 && w[m - 1] == 0.0) --m;
  return m;
}

void check_class(std::int32_t K, std::int32_t y, const char* who) {
  if (K < 2) {
    throw std::invalid_argument(std::string(who) + ": need at least 2 classes");
  }
  if (y < 1 || y > K) {
    throw std::invalid_argument(std::string(who) + ": class id out of range");
  }
}

// Ranked scores of the sampled classes, deepest rank needed = m.
std::vector<std::pair<std::int32_t, double>> ranked_sample(
    const ScoreFn& score, std::span<const std::int32_t> sample,
    std::size_t m) {
  std::vector<std::pair<std::int32_t, double>> s;
  s.reserve(sample.size());
  for (std::int32_t id : sample) s.emplace_back(id, score(id));
  m = std::min(m, s.size());
  if (m == s.size()) {
    std::sort(s.begin(), s.end(), rank_before);
  } else {
    std::partial_sort(s.begin(), s.begin() + m, s.end(), rank_before);
  }
  return s;
}

double log_choose(std::int64_t n, std::int64_t r) {
  if (r < 0 || r > n) return -std::numeric_limits<double>::infinity();
  return std::lgamma(static_cast<double>(n + 1)) -
         std::lgamma(static_cast<double>(r + 1)) -
         std::lgamma(static_cast<double>(n - r + 1));
}

}  // namespace

void SnmConfig::validate(std::int32_t K) const {
  if (B < 1) throw std::invalid_argument("snm: B must be positive");
  if (k < 1 || k > B) throw std::invalid_argument("snm: need 1 <= k <= B");
  if (B > K - 1) throw std::invalid_argument("snm: need B <= K-1");
  if (vartheta.size() != static_cast<std::size_t>(B)) {
    throw std::invalid_argument("snm: |vartheta| must equal B");
  }
  if (!vartheta.non_negative()) {
    throw std::invalid_argument("snm: vartheta must be non-negative");
  }
  if (!vartheta.non_increasing()) {
    throw std::invalid_argument("snm: vartheta must be non-increasing");
  }
}

std::vector<std::int32_t> snm_sample(const SnmConfig& cfg, std::int32_t K,
                                     std::int32_t y, Rng& rng) {
  cfg.validate(K);
  check_class(K, y, "snm_sample");
  const std::int64_t n = K - 1;  // candidate negatives
  // Partial Fisher-Yates over the virtual array of negatives; only the
  // displaced positions are stored, so memory stays O(B).
  std::unordered_map<std::int64_t, std::int64_t> moved;
  moved.reserve(2 * static_cast<std::size_t>(cfg.B));
  const auto at = [&moved](std::int64_t t) {
    const auto it = moved.find(t);
    return it == moved.end() ? t : it->second;
  };
  std::vector<std::int32_t> out(cfg.B);
  for (std::int64_t i = 0; i < cfg.B; ++i) {
    const std::int64_t j =
        i + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(n - i)));
    const std::int64_t vj = at(j);
    moved[j] = at(i);
    // Virtual position -> class id, skipping y.
    const std::int64_t id = vj + 1 < y ? vj + 1 : vj + 2;
    out[i] = static_cast<std::int32_t>(id);
  }
  return out;
}

double snm_loss_on(const SnmConfig& cfg, const PhiSpec& phi,
                   const ScoreFn& score, std::int32_t y,
                   std::span<const std::int32_t> sample) {
  if (sample.size() != static_cast<std::size_t>(cfg.B)) {
    throw std::invalid_argument("snm_loss_on: |sample| must equal B");
  }
  const std::size_t m = support_len(cfg.vartheta);
  double loss = 0.0;
  if (cfg.kind == LossKind::bowl) loss += phi_eval(phi, score(y));
  if (m == 0) return loss;
  const double vy = cfg.kind == LossKind::powl ? score(y) : 0.0;
  const auto ranked = ranked_sample(score, sample, m);
  for (std::size_t j = 0; j < m; ++j) {
    const double u =
        cfg.kind == LossKind::powl ? vy - ranked[j].second : -ranked[j].second;
    loss += cfg.vartheta[j] * phi_eval(phi, u);
  }
  return loss;
}

SnmGrad snm_grad_on(const SnmConfig& cfg, const PhiSpec& phi,
                    const ScoreFn& score, std::int32_t y,
                    std::span<const std::int32_t> sample) {
  if (sample.size() != static_cast<std::size_t>(cfg.B)) {
    throw std::invalid_argument("snm_grad_on: |sample| must equal B");
  }
  SnmGrad out;
  out.sample.assign(sample.begin(), sample.end());
  // Support = {y} + sample, sorted by class id, zeros kept.
  out.entries.reserve(sample.size() + 1);
  out.entries.emplace_back(y, 0.0);
  for (std::int32_t id : sample) out.entries.emplace_back(id, 0.0);
  std::sort(out.entries.begin(), out.entries.end());
  for (std::size_t i = 1; i < out.entries.size(); ++i) {
    if (out.entries[i].first == out.entries[i - 1].first) {
      throw std::invalid_argument("snm_grad_on: sample ids must be distinct");
    }
  }
  const auto slot = [&out](std::int32_t id) -> double& {
    const auto it = std::lower_bound(
        out.entries.begin(), out.entries.end(), id,
        [](const auto& e, std::int32_t v) { return e.first < v; });
    return it->second;
  };

  const std::size_t m = support_len(cfg.vartheta);
  const double vy = score(y);
  if (cfg.kind == LossKind::bowl) {
    out.value += phi_eval(phi, vy);
    slot(y) += phi_grad(phi, vy);
  }
  if (m == 0) return out;
  const auto ranked = ranked_sample(score, sample, m);
  for (std::size_t j = 0; j < m; ++j) {
    const double w = cfg.vartheta[j];
    if (w == 0.0) continue;
    if (cfg.kind == LossKind::powl) {
      const double u = vy - ranked[j].second;
      out.value += w * phi_eval(phi, u);
      const double d = w * phi_grad(phi, u);
      slot(y) += d;
      slot(ranked[j].first) -= d;
    } else {
      const double u = -ranked[j].second;
      out.value += w * phi_eval(phi, u);
      slot(ranked[j].first) -= w * phi_grad(phi, u);
    }
  }
  return out;
}

SnmDraw snm_loss(const SnmConfig& cfg, const PhiSpec& phi, std::int32_t K,
                 const ScoreFn& score, std::int32_t y, Rng& rng) {
  SnmDraw d;
  d.sample = snm_sample(cfg, K, y, rng);
  d.value = snm_loss_on(cfg, phi, score, y, d.sample);
  return d;
}

SnmDraw snm_loss(const SnmConfig& cfg, const PhiSpec& phi,
                 std::span<const double> v, std::int32_t y, Rng& rng) {
  const auto fn = [v](std::int32_t id) { return v[id - 1]; };
  return snm_loss(cfg, phi, static_cast<std::int32_t>(v.size()), fn, y, rng);
}

SnmGrad snm_grad(const SnmConfig& cfg, const PhiSpec& phi, std::int32_t K,
                 const ScoreFn& score, std::int32_t y, Rng& rng) {
  const auto sample = snm_sample(cfg, K, y, rng);
  return snm_grad_on(cfg, phi, score, y, sample);
}

SnmGrad snm_grad(const SnmConfig& cfg, const PhiSpec& phi,
                 std::span<const double> v, std::int32_t y, Rng& rng) {
  const auto fn = [v](std::int32_t id) { return v[id - 1]; };
  return snm_grad(cfg, phi, static_cast<std::int32_t>(v.size()), fn, y, rng);
}

namespace detail {

// K <= 64: every binomial up to C(62,31) and every product
// C(j-1,i-1)*C(K-1-j,B-i) <= C(K-2,B-1) fits a 64-bit integer exactly.
WeightVector induced_theta_exact(const SnmConfig& cfg, std::int32_t K) {
  const int B = cfg.B;
  const int n = K - 2;
  std::vector<std::vector<unsigned long long>> C(n + 1);
  for (int a = 0; a <= n; ++a) {
    C[a].assign(a + 1, 1ull);
    for (int b = 1; b < a; ++b) C[a][b] = C[a - 1][b - 1] + C[a - 1][b];
  }
  const double scale = static_cast<double>(B) / static_cast<double>(K - 1);
  const double denom = static_cast<double>(C[n][B - 1]);
  std::vector<double> theta(K - 1, 0.0);
  for (int j = 1; j <= K - 1; ++j) {
    const int high = j - 1;          // negatives ranked above j
    const int low = K - 1 - j;       // negatives ranked below j
    const int imin = std::max(1, B - low);
    const int imax = std::min(B, j);
    double sum = 0.0;
    for (int i = imin; i <= imax; ++i) {
      const double w = cfg.vartheta[i - 1];
      if (w == 0.0) continue;
      const unsigned long long ways = C[high][i - 1] * C[low][B - i];
      sum += w * static_cast<double>(ways);
    }
    theta[j - 1] = scale * (sum / denom);
  }
  return WeightVector::theta(std::move(theta));
}

// Large K: per rank j the conditional within-sample-rank distribution is
// evaluated from its mode outward with multiplicative ratio updates, or
// term-by-term through lgamma when vartheta is sparse. No binomial is ever
// formed explicitly, so K up to ~1e7 is safe from overflow.
WeightVector induced_theta_log(const SnmConfig& cfg, std::int32_t K) {
  const int B = cfg.B;
  const double scale = static_cast<double>(B) / static_cast<double>(K - 1);
  const double log_denom = log_choose(K - 2, B - 1);
  std::vector<double> theta(K - 1, 0.0);

  std::vector<int> nonzero;
  for (int i = 1; i <= B; ++i) {
    if (cfg.vartheta[i - 1] != 0.0) nonzero.push_back(i);
  }
  const bool sparse = nonzero.size() * 4 <= static_cast<std::size_t>(B);

  for (int j = 1; j <= K - 1; ++j) {
    const std::int64_t high = j - 1;
    const std::int64_t low = K - 1 - j;
    const int imin = static_cast<int>(std::max<std::int64_t>(1, B - low));
    const int imax = static_cast<int>(std::min<std::int64_t>(B, j));
    double sum = 0.0;
    if (sparse) {
      for (int i : nonzero) {
        if (i < imin || i > imax) continue;
        const double lp = log_choose(high, i - 1) + log_choose(low, B - i) -
                          log_denom;
        sum += cfg.vartheta[i - 1] * std::exp(lp);
      }
    } else {
      // Hypergeometric mode of the "ranked-above" count among the B-1
      // co-sampled negatives; the pmf there is at least 1/B, so exp below
      // cannot underflow.
      const std::int64_t mode_x =
          ((B) * (high + 1)) / (static_cast<std::int64_t>(K - 2) + 2);
      const int i0 = std::clamp(static_cast<int>(mode_x) + 1, imin, imax);
      const double p0 = std::exp(log_choose(high, i0 - 1) +
                                 log_choose(low, B - i0) - log_denom);
      const auto ratio_up = [&](int i) {
        // p(i+1)/p(i)
        return (static_cast<double>(high - i + 1) * static_cast<double>(B - i)) /
               (static_cast<double>(i) * static_cast<double>(low - B + i + 1));
      };
      double p = p0;
      sum += cfg.vartheta[i0 - 1] * p;
      for (int i = i0; i < imax; ++i) {
        p *= ratio_up(i);
        if (p == 0.0) break;
        sum += cfg.vartheta[i] * p;
      }
      p = p0;
      for (int i = i0 - 1; i >= imin; --i) {
        p /= ratio_up(i);
        if (p == 0.0) break;
        sum += cfg.vartheta[i - 1] * p;
      }
    }
    theta[j - 1] = scale * sum;
  }
  return WeightVector::theta(std::move(theta));
}

}  // namespace detail

WeightVector induced_theta(const SnmConfig& cfg, std::int32_t K) {
  cfg.validate(K);
  return K <= 64 ? detail::induced_theta_exact(cfg, K)
                 : detail::induced_theta_log(cfg, K);
}

double exact_expected_loss(const SnmConfig& cfg, const PhiSpec& phi,
                           std::span<const double> v, std::int32_t y) {
  const auto K = static_cast<std::int32_t>(v.size());
  cfg.validate(K);
  check_class(K, y, "exact_expected_loss");
  const int n = K - 1;
  const int B = cfg.B;
  double count = 1.0;
  for (int i = 1; i <= B; ++i) {
    count *= static_cast<double>(n - B + i) / static_cast<double>(i);
    if (count > 1e6 * 1.5) {
      throw std::length_error(
          "exact_expected_loss: C(K-1,B) exceeds enumeration capacity");
    }
  }
  const double subsets = std::round(count);
  if (subsets > 1e6) {
    throw std::length_error(
        "exact_expected_loss: C(K-1,B) exceeds enumeration capacity");
  }

  std::vector<std::int32_t> negatives;
  negatives.reserve(n);
  for (std::int32_t id = 1; id <= K; ++id) {
    if (id != y) negatives.push_back(id);
  }
  const auto fn = [v](std::int32_t id) { return v[id - 1]; };

  std::vector<int> idx(B);
  for (int i = 0; i < B; ++i) idx[i] = i;
  std::vector<std::int32_t> sample(B);
  KahanSum sum;
  while (true) {
    for (int i = 0; i < B; ++i) sample[i] = negatives[idx[i]];
    sum.add(snm_loss_on(cfg, phi, fn, y, sample));
    // Next lexicographic combination of B indices out of n.
    int pos = B - 1;
    while (pos >= 0 && idx[pos] == n - B + pos) --pos;
    if (pos < 0) break;
    ++idx[pos];
    for (int i = pos + 1; i < B; ++i) idx[i] = idx[i - 1] + 1;
  }
  return sum.total() / subsets;
}

WeightVector make_topk_vartheta(std::int32_t K, int B, int k) {
  if (k < 1 || k > B) {
    throw std::invalid_argument("make_topk_vartheta: need 1 <= k <= B");
  }
  const double w = static_cast<double>(K - 1) /
                   (static_cast<double>(k) * static_cast<double>(B));
  std::vector<double> v(B, 0.0);
  for (int j = 0; j < k; ++j) v[j] = w;
  return WeightVector::vartheta(std::move(v));
}

WeightVector make_negsample_vartheta(std::int32_t K, int B, int k) {
  if (k < 1 || B < 1) {
    throw std::invalid_argument("make_negsample_vartheta: need k, B >= 1");
  }
  const double w = static_cast<double>(K - 1) /
                   (static_cast<double>(k) * static_cast<double>(B));
  return WeightVector::vartheta(std::vector<double>(B, w));
}

WeightVector make_powerlaw_vartheta(std::int32_t K, int B, int k,
                                    double alpha) {
  if (k < 1 || B < 1) {
    throw std::invalid_argument("make_powerlaw_vartheta: need k, B >= 1");
  }
  if (!(alpha >= 0.0)) {
    throw std::invalid_argument("make_powerlaw_vartheta: alpha must be >= 0");
  }
  std::vector<double> v(B);
  double mass = 0.0;
  for (int j = 1; j <= B; ++j) {
    v[j - 1] = std::pow(static_cast<double>(j), -alpha);
    mass += v[j - 1];
  }
  // Same total weight as negative sampling.
  const double target = static_cast<double>(K - 1) / static_cast<double>(k);
  for (double& w : v) w *= target / mass;
  return WeightVector::vartheta(std::move(v));
}

WeightVector vartheta_from_strategy(const std::string& token, std::int32_t K,
                                    int B, int k) {
  const auto colon = token.find(':');
  const std::string head = token.substr(0, colon);
  const std::string arg =
      colon == std::string::npos ? "" : token.substr(colon + 1);
  if (head == "topk") {
    const int kk = arg.empty() ? k : std::stoi(arg);
    return make_topk_vartheta(K, B, kk);
  }
  if (head == "negsample") {
    return make_negsample_vartheta(K, B, k);
  }
  if (head == "powerlaw") {
    if (arg.empty()) {
      throw std::invalid_argument("powerlaw strategy needs an exponent");
    }
    return make_powerlaw_vartheta(K, B, k, std::stod(arg));
  }
  if (head == "custom") {
    std::vector<double> v;
    std::size_t pos = 0;
    while (pos <= arg.size()) {
      const auto comma = arg.find(',', pos);
      const std::string item = arg.substr(
          pos, comma == std::string::npos ? std::string::npos : comma - pos);
      if (item.empty()) {
        throw std::invalid_argument("custom strategy: empty weight");
      }
      v.push_back(std::stod(item));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (v.size() != static_cast<std::size_t>(B)) {
      throw std::invalid_argument("custom strategy: need exactly B weights");
    }
    return WeightVector::vartheta(std::move(v));
  }
  throw std::invalid_argument("unknown strategy: " + token);
}

}  // namespace owlsnm

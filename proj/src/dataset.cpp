#include "owlsnm/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace owlsnm {

namespace {

// Parses a non-negative decimal integer covering the whole token.
bool parse_count(const std::string& tok, std::int64_t& out) {
  if (tok.empty()) return false;
  std::int64_t v = 0;
  for (char c : tok) {
    if (c < '0' || c > '9') return false;
    v = v * 10 + (c - '0');
    if (v > (1ll << 40)) return false;
  }
  out = v;
  return true;
}

bool parse_double(const std::string& tok, double& out) {
  if (tok.empty()) return false;
  char* end = nullptr;
  out = std::strtod(tok.c_str(), &end);
  return end == tok.c_str() + tok.size() && std::isfinite(out);
}

}  // namespace

Dataset parse_xc(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;

  if (!std::getline(in, line)) throw ParseError(1, "missing header");
  ++lineno;
  std::int64_t n = 0, d = 0, k = 0;
  {
    std::istringstream hs(line);
    std::string a, b, c, extra;
    if (!(hs >> a >> b >> c) || (hs >> extra) || !parse_count(a, n) ||
        !parse_count(b, d) || !parse_count(c, k)) {
      throw ParseError(lineno, "header must be 'N D K'");
    }
  }

  Dataset ds;
  ds.n_features = static_cast<std::int32_t>(d);
  ds.n_labels = static_cast<std::int32_t>(k);
  ds.examples.reserve(static_cast<std::size_t>(n));

  while (std::getline(in, line)) {
    ++lineno;
    if (static_cast<std::int64_t>(ds.examples.size()) == n) {
      throw ParseError(lineno, "more example lines than declared");
    }
    SparseExample ex;
    const auto first_space = line.find(' ');
    const std::string label_field =
        first_space == std::string::npos ? line : line.substr(0, first_space);
    if (label_field.empty()) throw ParseError(lineno, "empty label field");

    std::size_t pos = 0;
    while (pos <= label_field.size()) {
      const auto comma = label_field.find(',', pos);
      const std::string tok = label_field.substr(
          pos, comma == std::string::npos ? std::string::npos : comma - pos);
      std::int64_t lab = 0;
      if (!parse_count(tok, lab)) throw ParseError(lineno, "bad label id");
      if (lab >= k) throw ParseError(lineno, "label id out of declared range");
      ex.labels.push_back(static_cast<std::int32_t>(lab) + 1);
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    std::sort(ex.labels.begin(), ex.labels.end());
    if (std::adjacent_find(ex.labels.begin(), ex.labels.end()) !=
        ex.labels.end()) {
      throw ParseError(lineno, "duplicate label id");
    }

    if (first_space != std::string::npos) {
      std::size_t fpos = first_space + 1;
      while (fpos <= line.size()) {
        const auto space = line.find(' ', fpos);
        const std::string tok = line.substr(
            fpos, space == std::string::npos ? std::string::npos : space - fpos);
        const auto colon = tok.find(':');
        if (colon == std::string::npos) {
          throw ParseError(lineno, "feature token must be 'index:value'");
        }
        std::int64_t fid = 0;
        double val = 0.0;
        if (!parse_count(tok.substr(0, colon), fid) ||
            !parse_double(tok.substr(colon + 1), val)) {
          throw ParseError(lineno, "bad feature token '" + tok + "'");
        }
        if (fid >= d) throw ParseError(lineno, "feature id out of declared range");
        if (!ex.features.empty() && fid <= ex.features.back().first) {
          throw ParseError(lineno, "feature ids must be strictly increasing");
        }
        ex.features.emplace_back(static_cast<std::int32_t>(fid), val);
        if (space == std::string::npos) break;
        fpos = space + 1;
      }
    }
    ds.examples.push_back(std::move(ex));
  }
  if (static_cast<std::int64_t>(ds.examples.size()) != n) {
    throw ParseError(lineno + 1, "fewer example lines than declared");
  }
  return ds;
}

Dataset parse_xc(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  return parse_xc(f);
}

void write_xc(const Dataset& ds, std::ostream& out) {
  out << ds.examples.size() << ' ' << ds.n_features << ' ' << ds.n_labels
      << '\n';
  char buf[64];
  for (const auto& ex : ds.examples) {
    for (std::size_t i = 0; i < ex.labels.size(); ++i) {
      if (i) out << ',';
      out << ex.labels[i] - 1;
    }
    for (const auto& [fid, val] : ex.features) {
      std::snprintf(buf, sizeof buf, "%.17g", val);
      out << ' ' << fid << ':' << buf;
    }
    out << '\n';
  }
}

void write_xc(const Dataset& ds, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  write_xc(ds, f);
  if (!f) throw std::runtime_error("failed writing " + path);
}

std::int32_t sample_positive(const SparseExample& ex, Rng& rng) {
  return ex.labels[rng.below(ex.labels.size())];
}

namespace {

void l2_normalize(std::vector<double>& v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  const double nrm = std::sqrt(sq);
  if (nrm > 0.0) {
    for (double& x : v) x /= nrm;
  }
}

}  // namespace

SyntheticSplit make_synthetic(std::int32_t K, std::int32_t d, std::int32_t n,
                              double noise, std::uint64_t seed) {
  if (K < 1 || d < 1 || n < 1) {
    throw std::invalid_argument("make_synthetic: K, d, n must be positive");
  }
  Rng root(seed);
  Rng proto_rng = root.split(1);
  Rng ex_rng = root.split(2);

  std::vector<std::vector<double>> prototypes(K, std::vector<double>(d));
  for (auto& p : prototypes) {
    for (double& x : p) x = proto_rng.normal();
    l2_normalize(p);
  }

  const std::int32_t keep = std::max<std::int32_t>(1, d / 10);
  SyntheticSplit out;
  out.train.n_features = out.test.n_features = d;
  out.train.n_labels = out.test.n_labels = K;
  const std::int32_t n_train = n * 4 / 5;

  std::vector<double> x(d);
  std::vector<std::int32_t> order(d);
  for (std::int32_t i = 0; i < n; ++i) {
    const auto cls = static_cast<std::int32_t>(ex_rng.below(K));
    for (std::int32_t t = 0; t < d; ++t) {
      x[t] = prototypes[cls][t] + noise * ex_rng.normal();
    }
    l2_normalize(x);
    // Keep the top `keep` coordinates by magnitude, index ascending at ties.
    for (std::int32_t t = 0; t < d; ++t) order[t] = t;
    std::nth_element(order.begin(), order.begin() + keep, order.end(),
                     [&x](std::int32_t a, std::int32_t b) {
                       const double ma = std::abs(x[a]), mb = std::abs(x[b]);
                       if (ma != mb) return ma > mb;
                       return a < b;
                     });
    std::sort(order.begin(), order.begin() + keep);
    SparseExample ex;
    ex.features.reserve(keep);
    for (std::int32_t t = 0; t < keep; ++t) {
      ex.features.emplace_back(order[t], x[order[t]]);
    }
    ex.labels = {cls + 1};
    (i < n_train ? out.train : out.test).examples.push_back(std::move(ex));
  }
  return out;
}

}  // namespace owlsnm

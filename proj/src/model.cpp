#include "owlsnm/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace owlsnm {

namespace {

constexpr double kDegenerateNorm = 1e-12;
constexpr char kMagic[8] = {'O', 'W', 'L', 'S', 'N', 'M', '1', '\0'};

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

void check_features(const EmbeddingModel& m, const Features& x) {
  for (const auto& [fid, val] : x) {
    if (fid < 0 || fid >= m.d) {
      throw std::invalid_argument("model: feature id out of range");
    }
    if (!std::isfinite(val)) {
      throw std::invalid_argument("model: non-finite feature value");
    }
  }
}

void check_class_id(const EmbeddingModel& m, std::int32_t y) {
  if (y < 1 || y > m.K) {
    throw std::invalid_argument("model: class id out of range");
  }
}

struct Forward {
  std::vector<double> h0;  // W1^T x
  std::vector<double> h1;  // relu(h0)
  std::vector<double> z;   // W2 h1
  std::vector<double> u;   // normalize(z) or fallback
  double z_norm = 0.0;
  bool degenerate = false;
};

Forward forward_input(const EmbeddingModel& m, const Features& x) {
  Forward f;
  const std::size_t e = m.e;
  f.h0.assign(e, 0.0);
  for (const auto& [fid, val] : x) {
    const double* row = m.w1.data() + static_cast<std::size_t>(fid) * e;
    for (std::size_t a = 0; a < e; ++a) f.h0[a] += val * row[a];
  }
  f.h1.resize(e);
  for (std::size_t a = 0; a < e; ++a) f.h1[a] = f.h0[a] > 0.0 ? f.h0[a] : 0.0;
  f.z.assign(e, 0.0);
  for (std::size_t a = 0; a < e; ++a) {
    const double* row = m.w2.data() + a * e;
    double s = 0.0;
    for (std::size_t b = 0; b < e; ++b) s += row[b] * f.h1[b];
    f.z[a] = s;
  }
  f.z_norm = norm2(f.z);
  f.u.assign(e, 0.0);
  if (f.z_norm < kDegenerateNorm) {
    f.degenerate = true;
    f.u[0] = 1.0;
  } else {
    for (std::size_t a = 0; a < e; ++a) f.u[a] = f.z[a] / f.z_norm;
  }
  return f;
}

}  // namespace

EmbeddingModel init_model(std::int32_t d, std::int32_t e, std::int32_t K,
                          std::uint64_t seed) {
  if (d < 1 || e < 1 || K < 1) {
    throw std::invalid_argument("init_model: dimensions must be positive");
  }
  EmbeddingModel m;
  m.d = d;
  m.e = e;
  m.K = K;
  Rng root(seed);
  const auto fill = [](std::vector<double>& w, std::size_t n, double bound,
                       Rng rng) {
    w.resize(n);
    for (double& x : w) x = rng.uniform(-bound, bound);
  };
  fill(m.w1, static_cast<std::size_t>(d) * e, 1.0 / std::sqrt(double(d)),
       root.split(1));
  fill(m.w2, static_cast<std::size_t>(e) * e, 1.0 / std::sqrt(double(e)),
       root.split(2));
  fill(m.c, static_cast<std::size_t>(K) * e, 1.0 / std::sqrt(double(e)),
       root.split(3));
  return m;
}

std::vector<double> embed_input(const EmbeddingModel& m, const Features& x) {
  check_features(m, x);
  return forward_input(m, x).u;
}

double score_embedded(const EmbeddingModel& m, std::span<const double> u,
                      std::int32_t y) {
  check_class_id(m, y);
  if (m.tracker) m.tracker->rows.insert(y);
  const auto row = m.class_row(y);
  const double nrm = norm2(row);
  if (nrm < kDegenerateNorm) return u[0];  // fallback basis vector
  return dot(u, row) / nrm;
}

std::vector<std::pair<std::int32_t, double>> score_classes(
    const EmbeddingModel& m, const Features& x,
    std::span<const std::int32_t> candidates) {
  const auto u = embed_input(m, x);
  std::vector<std::pair<std::int32_t, double>> out;
  out.reserve(candidates.size());
  for (std::int32_t y : candidates) {
    out.emplace_back(y, score_embedded(m, u, y));
  }
  return out;
}

std::vector<double> score_all(const EmbeddingModel& m, const Features& x) {
  const auto u = embed_input(m, x);
  std::vector<double> scores(m.K);
  for (std::int32_t y = 1; y <= m.K; ++y) {
    scores[y - 1] = score_embedded(m, u, y);
  }
  return scores;
}

ModelGrad backward(const EmbeddingModel& m, const Features& x,
                   std::span<const std::pair<std::int32_t, double>> score_grad) {
  check_features(m, x);
  const std::size_t e = m.e;
  const Forward f = forward_input(m, x);

  ModelGrad g;
  g.w2.assign(e * e, 0.0);

  // Scores -> class rows and the input embedding.
  std::vector<double> du(e, 0.0);
  for (const auto& [y, gy] : score_grad) {
    check_class_id(m, y);
    if (m.tracker) m.tracker->rows.insert(y);
    const auto row = m.class_row(y);
    const double nrm = norm2(row);
    std::vector<double> gc(e, 0.0);
    if (nrm < kDegenerateNorm) {
      // Fallback embedding is the constant e1: no gradient into the row.
      du[0] += gy;
    } else if (gy != 0.0) {
      const double inv = 1.0 / nrm;
      double udotc = 0.0;
      for (std::size_t a = 0; a < e; ++a) udotc += f.u[a] * row[a] * inv;
      for (std::size_t a = 0; a < e; ++a) {
        const double ctil = row[a] * inv;
        gc[a] = gy * (f.u[a] - udotc * ctil) * inv;
        du[a] += gy * ctil;
      }
    }
    g.c_rows.emplace_back(y, std::move(gc));
  }

  if (f.degenerate) return g;  // fallback input embedding: constant in params

  // Through the input normalization.
  std::vector<double> dz(e);
  const double dudotu = dot(du, f.u);
  for (std::size_t a = 0; a < e; ++a) {
    dz[a] = (du[a] - dudotu * f.u[a]) / f.z_norm;
  }
  // Through W2.
  std::vector<double> dh1(e, 0.0);
  for (std::size_t a = 0; a < e; ++a) {
    const double* row = m.w2.data() + a * e;
    double* grow = g.w2.data() + a * e;
    for (std::size_t b = 0; b < e; ++b) {
      grow[b] = dz[a] * f.h1[b];
      dh1[b] += row[b] * dz[a];
    }
  }
  // Through ReLU (subgradient 0 at 0) and the touched W1 rows.
  std::vector<double> dh0(e);
  for (std::size_t a = 0; a < e; ++a) dh0[a] = f.h0[a] > 0.0 ? dh1[a] : 0.0;
  for (const auto& [fid, val] : x) {
    std::vector<double> grow(e);
    for (std::size_t a = 0; a < e; ++a) grow[a] = val * dh0[a];
    g.w1_rows.emplace_back(fid, std::move(grow));
  }
  return g;
}

namespace {

void put_u64(std::vector<unsigned char>& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back((v >> (8 * i)) & 0xff);
}

void put_f32(std::vector<unsigned char>& buf, float v) {
  const auto bits = std::bit_cast<std::uint32_t>(v);
  for (int i = 0; i < 4; ++i) buf.push_back((bits >> (8 * i)) & 0xff);
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(p[i]) << (8 * i);
  return v;
}

float get_f32(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(p[i]) << (8 * i);
  return std::bit_cast<float>(v);
}

}  // namespace

void save_model(const EmbeddingModel& m, const std::string& path) {
  std::vector<unsigned char> buf;
  buf.reserve(32 + 4 * (m.w1.size() + m.w2.size() + m.c.size()));
  buf.insert(buf.end(), kMagic, kMagic + 8);
  put_u64(buf, m.d);
  put_u64(buf, m.e);
  put_u64(buf, m.K);
  for (const auto* mat : {&m.w1, &m.w2, &m.c}) {
    for (double v : *mat) put_f32(buf, static_cast<float>(v));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  f.write(reinterpret_cast<const char*>(buf.data()),
          static_cast<std::streamsize>(buf.size()));
  if (!f) throw std::runtime_error("failed writing " + path);
}

EmbeddingModel load_model(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(f)),
                                 std::istreambuf_iterator<char>());
  if (buf.size() < 32 || std::memcmp(buf.data(), kMagic, 8) != 0) {
    throw std::runtime_error(path + ": not a model checkpoint");
  }
  EmbeddingModel m;
  const std::uint64_t d = get_u64(buf.data() + 8);
  const std::uint64_t e = get_u64(buf.data() + 16);
  const std::uint64_t K = get_u64(buf.data() + 24);
  if (d < 1 || e < 1 || K < 1 || d > INT32_MAX || e > INT32_MAX ||
      K > INT32_MAX) {
    throw std::runtime_error(path + ": bad checkpoint dimensions");
  }
  const std::uint64_t count = (d + e + K) * e;
  if (buf.size() != 32 + 4 * count) {
    throw std::runtime_error(path + ": truncated checkpoint");
  }
  m.d = static_cast<std::int32_t>(d);
  m.e = static_cast<std::int32_t>(e);
  m.K = static_cast<std::int32_t>(K);
  const unsigned char* p = buf.data() + 32;
  const auto read_mat = [&p](std::vector<double>& mat, std::uint64_t n) {
    mat.resize(n);
    for (std::uint64_t i = 0; i < n; ++i, p += 4) mat[i] = get_f32(p);
  };
  read_mat(m.w1, d * e);
  read_mat(m.w2, e * e);
  read_mat(m.c, K * e);
  return m;
}

}  // namespace owlsnm

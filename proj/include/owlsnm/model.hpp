#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "owlsnm/dataset.hpp"

namespace owlsnm {

// Records which class-embedding rows a computation read; attached by
// locality tests, null in normal use.
struct RowTouchTracker {
  std::unordered_set<std::int32_t> rows;
};

// Two-layer input tower (d->e linear, ReLU, e->e linear, l2 normalize)
// against a K x e class-embedding table scored by inner product. All
// embeddings are unit vectors, so scores live in [-1, 1]. Class rows are
// stored unnormalized and normalized on read, keeping plain SGD updates
// valid.
struct EmbeddingModel {
  std::int32_t d = 0;
  std::int32_t e = 0;
  std::int32_t K = 0;
  std::vector<double> w1;  // d x e, row-major: row = feature embedding
  std::vector<double> w2;  // e x e, row-major
  std::vector<double> c;   // K x e, row-major: row = class embedding

  RowTouchTracker* tracker = nullptr;  // not serialized

  std::span<const double> class_row(std::int32_t y) const {
    return {c.data() + static_cast<std::size_t>(y - 1) * e,
            static_cast<std::size_t>(e)};
  }
};

// Entries i.i.d. uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] per matrix.
EmbeddingModel init_model(std::int32_t d, std::int32_t e, std::int32_t K,
                          std::uint64_t seed);

using Features = std::vector<std::pair<std::int32_t, double>>;

// normalize(W2 * relu(W1^T x)); an all-but-zero pre-normalization vector
// falls back to the first basis vector.
std::vector<double> embed_input(const EmbeddingModel& m, const Features& x);

// Inner products of the input embedding against the (normalized) rows of
// the requested candidates; cost O(|candidates| * e).
std::vector<std::pair<std::int32_t, double>> score_classes(
    const EmbeddingModel& m, const Features& x,
    std::span<const std::int32_t> candidates);

// Scores the input embedding `u` against one class row.
double score_embedded(const EmbeddingModel& m, std::span<const double> u,
                      std::int32_t y);

// All K scores via one matrix-vector product.
std::vector<double> score_all(const EmbeddingModel& m, const Features& x);

// Parameter gradients for the loss whose per-class score derivatives are
// `score_grad` (supported on the touched classes only): the W1 rows of
// x's nonzero features, all of W2, and the touched rows of C.
struct ModelGrad {
  std::vector<std::pair<std::int32_t, std::vector<double>>> w1_rows;
  std::vector<double> w2;  // dense e x e
  std::vector<std::pair<std::int32_t, std::vector<double>>> c_rows;
};

ModelGrad backward(const EmbeddingModel& m, const Features& x,
                   std::span<const std::pair<std::int32_t, double>> score_grad);

// Checkpoint: magic "OWLSNM1\0", little-endian u64 d, e, K, then W1, W2, C
// row-major as little-endian f32.
void save_model(const EmbeddingModel& m, const std::string& path);
EmbeddingModel load_model(const std::string& path);

}  // namespace owlsnm

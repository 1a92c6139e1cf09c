#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "owlsnm/rng.hpp"

namespace owlsnm {

// One multilabel example: sparse features (0-based ids, strictly
// increasing) and a non-empty set of relevant labels (1-based, sorted).
struct SparseExample {
  std::vector<std::pair<std::int32_t, double>> features;
  std::vector<std::int32_t> labels;
};

struct Dataset {
  std::vector<SparseExample> examples;
  std::int32_t n_features = 0;  // d
  std::int32_t n_labels = 0;    // K

  std::size_t size() const { return examples.size(); }
};

struct ParseError : std::runtime_error {
  ParseError(std::size_t line_, const std::string& what_)
      : std::runtime_error("line " + std::to_string(line_) + ": " + what_),
        line(line_) {}
  std::size_t line;
};

// Reads the plain-text exchange format:
//   header  "N D K"
//   lines   "l1,l2,...,lm f1:v1 f2:v2 ..."
// with 0-based label and feature ids in the file (labels become 1-based in
// memory), single spaces, `:`-separated feature pairs. Lines may have zero
// features but never zero labels. Parsing is streaming: one line at a time.
Dataset parse_xc(std::istream& in);
Dataset parse_xc(const std::string& path);

void write_xc(const Dataset& ds, std::ostream& out);
void write_xc(const Dataset& ds, const std::string& path);

// Uniformly random member of the example's label set.
std::int32_t sample_positive(const SparseExample& ex, Rng& rng);

struct SyntheticSplit {
  Dataset train;
  Dataset test;
};

// Desk-scale synthetic benchmark: K unit-norm prototypes in R^d; each
// example is a noisy prototype, normalized, then sparsified to its
// top d/10 magnitude coordinates; deterministic 80/20 split by index.
SyntheticSplit make_synthetic(std::int32_t K, std::int32_t d, std::int32_t n,
                              double noise, std::uint64_t seed);

}  // namespace owlsnm

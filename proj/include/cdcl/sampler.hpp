#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "cdcl/degradation.hpp"
#include "cdcl/imaging.hpp"
#include "cdcl/tensor.hpp"

namespace cdcl::sampler {

using degradation::DegradationSetting;
using degradation::DegradationSpec;
using imaging::Image;

struct AugmentOptions {
  bool flip = true;
  bool rotate = true;
};

struct PatchSequence {
  std::vector<Image> patches;
  std::vector<int> source_ids;
};

// Picks B corpus indices: without replacement when the corpus is large
// enough, otherwise with replacement (and a warning on stderr).
std::vector<int> select_sources(int corpus_size, int batch, std::mt19937_64& rng);

// One uniformly positioned crop per image followed by a random horizontal flip
// and quarter-turn rotation.
PatchSequence sample_patch_sequence(const std::vector<Image>& images, int patch_size, std::mt19937_64& rng,
                                    AugmentOptions augment = {});
PatchSequence sample_patch_sequence(const std::vector<Image>& corpus, const std::vector<int>& sources,
                                    int patch_size, std::mt19937_64& rng, AugmentOptions augment = {});

// D x B grid of indices into the sequence: cell (i, b) holds (b + i) mod B.
struct HrGrid {
  int rows = 0;
  int cols = 0;
  std::vector<int> index;
  int at(int i, int b) const { return index[static_cast<std::size_t>(i) * cols + b]; }
};

HrGrid build_patch_matrix(const PatchSequence& seq, int rows);

struct PatchMatrix {
  int rows = 0;  // D
  int cols = 0;  // B
  std::vector<Image> hr;  // row-major D x B
  std::vector<Image> lr;
  std::vector<int> source;  // source id per cell
  std::vector<DegradationSpec> specs;  // one per column

  const Image& hr_at(int i, int b) const { return hr[static_cast<std::size_t>(i) * cols + b]; }
  const Image& lr_at(int i, int b) const { return lr[static_cast<std::size_t>(i) * cols + b]; }
};

// One spec per column from sample_spec; every cell degraded with its column's spec.
PatchMatrix degrade_matrix(const PatchSequence& seq, const HrGrid& grid, const DegradationSetting& setting,
                           int scale, std::mt19937_64& rng);

// Both views of a matrix as tensors with item index b * D + i: items
// [b*D, (b+1)*D) form positive set b; every item is also an (LR, HR) pair.
struct TrainingBatch {
  int positives = 0;  // B
  int views = 0;      // D
  Tensor lr;
  Tensor hr;
  std::vector<DegradationSpec> specs;
};

TrainingBatch to_training_batch(const PatchMatrix& m);

// Row-major P x P grid of square blocks.
std::vector<Image> divide(const Image& patch, int p);
// (N, C, H, W) -> (N*P*P, C, H/P, W/P); item n*P*P + k is block k of item n.
template <typename T>
BasicTensor<T> divide_batch(const BasicTensor<T>& x, int p);

// All unordered pairs of [0, n) in lexicographic order.
std::vector<std::pair<std::int64_t, std::int64_t>> pair_indices(int n);

}  // namespace cdcl::sampler

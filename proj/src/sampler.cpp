#include "cdcl/sampler.hpp"

#include <algorithm>
#include <iostream>
#include <numeric>

namespace cdcl::sampler {

std::vector<int> select_sources(int corpus_size, int batch, std::mt19937_64& rng) {
  if (corpus_size < 1) throw ConfigError("training corpus is empty");
  if (batch < 1) throw ConfigError("batch size must be positive");
  std::vector<int> out;
  if (corpus_size >= batch) {
    std::vector<int> all(static_cast<std::size_t>(corpus_size));
    std::iota(all.begin(), all.end(), 0);
    std::shuffle(all.begin(), all.end(), rng);
    out.assign(all.begin(), all.begin() + batch);
  } else {
    static bool warned = false;
    if (!warned) {
      std::cerr << "warning: corpus has " << corpus_size << " images but batch size is " << batch
                << "; sampling sources with replacement\n";
      warned = true;
    }
    std::uniform_int_distribution<int> pick(0, corpus_size - 1);
    for (int i = 0; i < batch; ++i) out.push_back(pick(rng));
  }
  return out;
}

PatchSequence sample_patch_sequence(const std::vector<Image>& corpus, const std::vector<int>& sources,
                                    int patch_size, std::mt19937_64& rng, AugmentOptions augment) {
  if (patch_size < 1) throw ConfigError("patch size must be positive");
  PatchSequence seq;
  for (const int id : sources) {
    if (id < 0 || static_cast<std::size_t>(id) >= corpus.size()) throw ShapeError("source id out of range");
    const Image& img = corpus[static_cast<std::size_t>(id)];
    if (img.width < patch_size || img.height < patch_size) {
      throw ShapeError("image " + std::to_string(id) + " is smaller than the patch size");
    }
    const int x = std::uniform_int_distribution<int>(0, img.width - patch_size)(rng);
    const int y = std::uniform_int_distribution<int>(0, img.height - patch_size)(rng);
    Image patch = imaging::crop(img, x, y, patch_size, patch_size);
    const bool flip = std::bernoulli_distribution(0.5)(rng);
    const int turns = std::uniform_int_distribution<int>(0, 3)(rng);
    if (augment.flip && flip) patch = imaging::flip_horizontal(patch);
    if (augment.rotate && turns) patch = imaging::rotate90(patch, turns);
    seq.patches.push_back(std::move(patch));
    seq.source_ids.push_back(id);
  }
  return seq;
}

PatchSequence sample_patch_sequence(const std::vector<Image>& images, int patch_size, std::mt19937_64& rng,
                                    AugmentOptions augment) {
  std::vector<int> ids(images.size());
  std::iota(ids.begin(), ids.end(), 0);
  return sample_patch_sequence(images, ids, patch_size, rng, augment);
}

HrGrid build_patch_matrix(const PatchSequence& seq, int rows) {
  const int b = static_cast<int>(seq.patches.size());
  if (rows < 2) throw ConfigError("number of cyclic shifts D must be at least 2");
  if (rows > b) throw ConfigError("number of cyclic shifts D must not exceed the batch size B");
  HrGrid grid;
  grid.rows = rows;
  grid.cols = b;
  grid.index.resize(static_cast<std::size_t>(rows) * b);
  for (int i = 0; i < rows; ++i)
    for (int col = 0; col < b; ++col) grid.index[static_cast<std::size_t>(i) * b + col] = (col + i) % b;
  return grid;
}

PatchMatrix degrade_matrix(const PatchSequence& seq, const HrGrid& grid, const DegradationSetting& setting,
                           int scale, std::mt19937_64& rng) {
  if (grid.cols != static_cast<int>(seq.patches.size()) || grid.index.size() != static_cast<std::size_t>(grid.rows) * grid.cols) {
    throw ShapeError("degrade_matrix: grid does not match the sequence");
  }
  PatchMatrix m;
  m.rows = grid.rows;
  m.cols = grid.cols;
  for (int b = 0; b < grid.cols; ++b) m.specs.push_back(degradation::sample_spec(setting, scale, rng));
  const std::size_t cells = grid.index.size();
  m.hr.reserve(cells);
  m.lr.reserve(cells);
  for (int i = 0; i < grid.rows; ++i) {
    for (int b = 0; b < grid.cols; ++b) {
      const int k = grid.at(i, b);
      const Image& hr = seq.patches[static_cast<std::size_t>(k)];
      m.hr.push_back(hr);
      m.lr.push_back(degradation::degrade(hr, m.specs[static_cast<std::size_t>(b)], rng()));
      m.source.push_back(seq.source_ids.empty() ? k : seq.source_ids[static_cast<std::size_t>(k)]);
    }
  }
  return m;
}

TrainingBatch to_training_batch(const PatchMatrix& m) {
  std::vector<Image> lr, hr;
  for (int b = 0; b < m.cols; ++b)
    for (int i = 0; i < m.rows; ++i) {
      lr.push_back(m.lr_at(i, b));
      hr.push_back(m.hr_at(i, b));
    }
  return {m.cols, m.rows, imaging::to_tensor(lr), imaging::to_tensor(hr), m.specs};
}

std::vector<Image> divide(const Image& patch, int p) {
  if (p < 1) throw ConfigError("P must be positive");
  if (patch.width % p != 0 || patch.height % p != 0) throw ShapeError("divide: patch side not divisible by P");
  const int bw = patch.width / p, bh = patch.height / p;
  std::vector<Image> blocks;
  for (int by = 0; by < p; ++by)
    for (int bx = 0; bx < p; ++bx) blocks.push_back(imaging::crop(patch, bx * bw, by * bh, bw, bh));
  return blocks;
}

template <typename T>
BasicTensor<T> divide_batch(const BasicTensor<T>& x, int p) {
  const Shape& s = x.shape();
  if (p < 1) throw ConfigError("P must be positive");
  if (s.h % p != 0 || s.w % p != 0) throw ShapeError("divide_batch: spatial dims not divisible by P");
  const std::int64_t bh = s.h / p, bw = s.w / p;
  const Shape out_shape{s.n * p * p, s.c, bh, bw};
  std::vector<T> out(static_cast<std::size_t>(out_shape.numel()));
  const auto src = x.data();
  std::size_t o = 0;
  for (std::int64_t n = 0; n < s.n; ++n)
    for (int k = 0; k < p * p; ++k) {
      const std::int64_t y0 = (k / p) * bh, x0 = (k % p) * bw;
      for (std::int64_t c = 0; c < s.c; ++c)
        for (std::int64_t y = 0; y < bh; ++y)
          for (std::int64_t xx = 0; xx < bw; ++xx) out[o++] = src[static_cast<std::size_t>(((n * s.c + c) * s.h + y0 + y) * s.w + x0 + xx)];
    }
  return BasicTensor<T>::from(out_shape, std::move(out));
}

template Tensor divide_batch<float>(const Tensor&, int);
template Tensor64 divide_batch<double>(const Tensor64&, int);

std::vector<std::pair<std::int64_t, std::int64_t>> pair_indices(int n) {
  if (n < 2) throw ConfigError("pair_indices needs at least 2 items");
  std::vector<std::pair<std::int64_t, std::int64_t>> out;
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b) out.emplace_back(a, b);
  return out;
}

}  // namespace cdcl::sampler

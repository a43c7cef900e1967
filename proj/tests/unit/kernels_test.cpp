#include <gtest/gtest.h>

#include <random>
#include <vector>

#include "cdcl/kernels.hpp"
#include "cdcl/parallel.hpp"

namespace cdcl::kernels {
namespace {

std::vector<float> random_values(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> dist(-1.f, 1.f);
  std::vector<float> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

ConvGeometry random_geometry(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> dim(2, 11), small(1, 3), kern(0, 3);
  ConvGeometry g;
  g.groups = small(rng);
  g.n = small(rng);
  g.cin = g.groups * small(rng);
  g.cout = g.groups * small(rng);
  g.h = dim(rng);
  g.w = dim(rng);
  g.k = 2 * kern(rng) + 1;
  g.stride = small(rng) == 1 ? 2 : 1;
  g.pad = g.k / 2;
  g.mode = (g.pad < g.h && g.pad < g.w && small(rng) > 1) ? PadMode::Reflect : PadMode::Zero;
  if (g.h + 2 * g.pad < g.k || g.w + 2 * g.pad < g.k) g.k = 1, g.pad = 0;
  return g;
}

// The parallel kernels must reproduce the direct loop nests bit for bit,
// whatever the thread count.
TEST(KernelsTest, ParallelConvMatchesReferenceBitExactly) {
  std::mt19937_64 rng(42);
  for (int threads : {1, 3}) {
    set_num_threads(threads);
    for (int trial = 0; trial < 60; ++trial) {
      const ConvGeometry g = random_geometry(rng);
      g.validate();
      const auto x = random_values(static_cast<std::size_t>(g.n * g.cin * g.h * g.w), rng);
      const auto w =
          random_values(static_cast<std::size_t>(g.cout * g.cin_per_group() * g.k * g.k), rng);
      const auto b = random_values(static_cast<std::size_t>(g.cout), rng);
      const std::size_t padded_n = static_cast<std::size_t>(g.n * g.cin * g.padded_h() * g.padded_w());
      const std::size_t out_n = static_cast<std::size_t>(g.n * g.cout * g.out_h() * g.out_w());
      std::vector<float> xp(padded_n);
      pad_input(g, x.data(), xp.data());
      const auto dy = random_values(out_n, rng);

      std::vector<float> y_ref(out_n), y_par(out_n);
      reference::conv2d_forward(g, xp.data(), w.data(), b.data(), y_ref.data());
      parallel::conv2d_forward(g, xp.data(), w.data(), b.data(), y_par.data());
      ASSERT_EQ(y_ref, y_par) << "forward, trial " << trial;

      std::vector<float> dx_ref(padded_n, 0.f), dx_par(padded_n, 0.f);
      reference::conv2d_backward_input(g, dy.data(), w.data(), dx_ref.data());
      parallel::conv2d_backward_input(g, dy.data(), w.data(), dx_par.data());
      ASSERT_EQ(dx_ref, dx_par) << "backward input, trial " << trial;

      std::vector<float> dw_ref(w.size()), dw_par(w.size()), db_ref(b.size()), db_par(b.size());
      reference::conv2d_backward_weight(g, xp.data(), dy.data(), dw_ref.data(), db_ref.data());
      parallel::conv2d_backward_weight(g, xp.data(), dy.data(), dw_par.data(), db_par.data());
      ASSERT_EQ(dw_ref, dw_par) << "backward weight, trial " << trial;
      ASSERT_EQ(db_ref, db_par);
    }
  }
  set_num_threads(0);
}

TEST(KernelsTest, ParallelDenseMatchesReference) {
  std::mt19937_64 rng(7);
  const std::int64_t n = 5, in = 13, out = 9;
  const auto x = random_values(n * in, rng), w = random_values(out * in, rng),
             b = random_values(out, rng);
  std::vector<float> y_ref(n * out), y_par(n * out);
  reference::dense_forward(n, in, out, x.data(), w.data(), b.data(), y_ref.data());
  parallel::dense_forward(n, in, out, x.data(), w.data(), b.data(), y_par.data());
  EXPECT_EQ(y_ref, y_par);
}

TEST(KernelsTest, FilterPlaneParallelAndSeparableAgreeWithReference) {
  std::mt19937_64 rng(9);
  const std::int64_t h = 19, w = 23, k = 7;
  const auto src = random_values(h * w, rng);
  std::vector<double> taps(k);
  for (std::int64_t i = 0; i < k; ++i) taps[i] = 1.0 + static_cast<double>((i * 3) % 5);
  std::vector<double> kernel(k * k);
  for (std::int64_t i = 0; i < k; ++i)
    for (std::int64_t j = 0; j < k; ++j) kernel[i * k + j] = taps[i] * taps[j] / 400.0;
  for (auto& t : taps) t /= 20.0;
  std::vector<float> ref(h * w), par(h * w), sep(h * w);
  reference::filter_plane(h, w, src.data(), k, kernel.data(), ref.data());
  parallel::filter_plane(h, w, src.data(), k, kernel.data(), par.data());
  parallel::filter_plane_separable(h, w, src.data(), taps, sep.data());
  for (std::int64_t i = 0; i < h * w; ++i) {
    EXPECT_FLOAT_EQ(ref[i], par[i]);
    EXPECT_NEAR(ref[i], sep[i], 1e-6);
  }
}

TEST(KernelsTest, ReflectIndexing) {
  EXPECT_EQ(source_index(-1, 5, PadMode::Reflect), 1);
  EXPECT_EQ(source_index(5, 5, PadMode::Reflect), 3);
  EXPECT_EQ(source_index(-2, 5, PadMode::Reflect), 2);
  EXPECT_EQ(source_index(-1, 5, PadMode::Zero), -1);
  EXPECT_EQ(source_index(9, 5, PadMode::Reflect), 1);
}

}  // namespace
}  // namespace cdcl::kernels

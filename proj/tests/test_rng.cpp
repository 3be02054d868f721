#include <gtest/gtest.h>

#include <numeric>
#include <set>
#include <stdexcept>
#include <vector>

#include "stablehjb/parallel.hpp"
#include "stablehjb/rng.hpp"

using namespace stablehjb;

TEST(RngStream, SameSeedAndStreamGiveIdenticalSequence) {
  RngStream a(42, 7), b(42, 7);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(RngStream, SubstreamsAreDistinctAndReproducible) {
  const RngStream root(9);
  std::set<std::uint64_t> firsts;
  for (std::uint64_t c = 0; c < 200; ++c) {
    RngStream s1 = root.substream(c), s2 = root.substream(c);
    const auto v = s1.next_u64();
    EXPECT_EQ(v, s2.next_u64());
    firsts.insert(v);
  }
  EXPECT_EQ(firsts.size(), 200u);
  RngStream nested1 = root.substream(3).substream(4), nested2 = root.substream(4).substream(3);
  EXPECT_NE(nested1.next_u64(), nested2.next_u64());
}

TEST(RngStream, UniformStaysInOpenInterval) {
  RngStream r(1);
  double lo = 1.0, hi = 0.0, sum = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform_open();
    lo = std::min(lo, u);
    hi = std::max(hi, u);
    sum += u;
  }
  EXPECT_GT(lo, 0.0);
  EXPECT_LT(hi, 1.0);
  EXPECT_NEAR(sum / n, 0.5, 3.0 * std::sqrt(1.0 / 12.0 / n));
}

TEST(ParallelFor, ResultsDoNotDependOnWorkerCount) {
  const std::size_t n = 10007;
  auto run = [&](unsigned workers) {
    std::vector<double> out(n);
    parallel_for(n, workers, [&](std::size_t i) {
      RngStream s = RngStream(5).substream(i);
      out[i] = s.uniform_open();
    });
    return pairwise_sum(out);
  };
  const double ref = run(1);
  EXPECT_EQ(ref, run(3));
  EXPECT_EQ(ref, run(8));
}

TEST(ParallelFor, RethrowsLowestFailingIndex) {
  for (unsigned workers : {1u, 4u}) {
    try {
      parallel_for(100, workers, [](std::size_t i) {
        if (i == 37 || i == 80) throw std::runtime_error(std::to_string(i));
      });
      FAIL() << "no exception";
    } catch (const std::runtime_error& e) {
      EXPECT_STREQ(e.what(), "37");
    }
  }
}

TEST(PairwiseSum, MatchesExactIntegerSum) {
  std::vector<double> v(12345);
  std::iota(v.begin(), v.end(), 1.0);
  EXPECT_EQ(pairwise_sum(v), 12345.0 * 12346.0 / 2.0);
}

TEST(SampleStats, MeanAndStandardError) {
  const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
  const auto s = sample_stats(v);
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_NEAR(s.std_error, std::sqrt((5.0 / 3.0) / 4.0), 1e-15);
  const std::vector<double> c(10, 3.0);
  EXPECT_EQ(sample_stats(c).std_error, 0.0);
}

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "bdsde/noise.hpp"

using namespace bdsde;

namespace {

NoiseConfig config(std::size_t m, std::size_t ni, std::uint64_t seed = 42, std::size_t d = 1, std::size_t l = 1) {
  NoiseConfig c;
  c.seed = seed;
  c.m_outer = m;
  c.n_inner = ni;
  c.d = d;
  c.l = l;
  return c;
}

class ScopedThreads {
public:
  explicit ScopedThreads(const char* v) {
    if (const char* old = std::getenv("BDSDE_THREADS")) old_ = old;
    setenv("BDSDE_THREADS", v, 1);
  }
  ~ScopedThreads() {
    if (old_.empty()) unsetenv("BDSDE_THREADS");
    else setenv("BDSDE_THREADS", old_.c_str(), 1);
  }

private:
  std::string old_;
};

} // namespace

TEST(Philox, KnownAnswerVectors) {
  // Reference outputs of Philox4x32-10 from the Random123 distribution.
  const auto zero = Philox4x32::generate({0u, 0u, 0u, 0u}, {0u, 0u});
  EXPECT_EQ(zero[0], 0x6627e8d5u);
  EXPECT_EQ(zero[1], 0xe169c58du);
  EXPECT_EQ(zero[2], 0xbc57ac4cu);
  EXPECT_EQ(zero[3], 0x9b00dbd8u);
  const auto ones = Philox4x32::generate({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                                         {0xffffffffu, 0xffffffffu});
  EXPECT_EQ(ones[0], 0x408f276du);
  EXPECT_EQ(ones[1], 0x41c83b0eu);
  EXPECT_EQ(ones[2], 0xa20bc7c6u);
  EXPECT_EQ(ones[3], 0x6d5451fdu);
  const auto pi = Philox4x32::generate({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                                       {0xa4093822u, 0x299f31d0u});
  EXPECT_EQ(pi[0], 0xd16cfe09u);
  EXPECT_EQ(pi[1], 0x94fdccebu);
  EXPECT_EQ(pi[2], 0x5001e420u);
  EXPECT_EQ(pi[3], 0x24126ea1u);
}

TEST(NormalStream, QuantilesMatchStandardNormal) {
  const NormalStream s(123, kWStream);
  const std::size_t n = 200000;
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = s(i);
  const boost::math::normal_distribution<double> N;
  for (double q : {-2.0, -1.0, 0.0, 0.5, 1.5}) {
    std::size_t below = 0;
    for (double v : x) below += v <= q;
    const double p = boost::math::cdf(N, q);
    const double se = std::sqrt(p * (1 - p) / static_cast<double>(n));
    EXPECT_NEAR(static_cast<double>(below) / static_cast<double>(n), p, 4 * se) << "at " << q;
  }
}

TEST(NormalStream, StreamsDiffer) {
  const NormalStream w(1, kWStream), b(1, kBStream), w2(2, kWStream);
  EXPECT_NE(w(0), b(0));
  EXPECT_NE(w(0), w2(0));
  EXPECT_EQ(w(17), NormalStream(1, kWStream)(17));
}

TEST(Generate, SameConfigGivesIdenticalBundles) {
  const auto grid = make_uniform_grid(1.0, 20);
  EXPECT_TRUE(generate(grid, config(4, 50)) == generate(grid, config(4, 50)));
  EXPECT_FALSE(generate(grid, config(4, 50, 1)) == generate(grid, config(4, 50, 2)));
}

TEST(Generate, IncrementMomentsMatchDt) {
  const auto grid = make_uniform_grid(1.0, 10);
  const auto b = generate(grid, config(8, 2000));
  const auto dw = b.dw_all();
  double s = 0.0, ss = 0.0;
  for (double v : dw) s += v;
  const double n = static_cast<double>(dw.size());
  const double m = s / n;
  for (double v : dw) ss += (v - m) * (v - m);
  const double var = ss / (n - 1);
  EXPECT_LE(std::abs(m), 4 * std::sqrt(var / n));
  EXPECT_NEAR(var, grid.dt(), 0.1 * grid.dt());

  // per-step version from the invariant
  for (std::size_t k = 0; k < grid.n_steps(); ++k) {
    double sk = 0.0, ssk = 0.0;
    for (std::size_t o = 0; o < b.m_outer(); ++o)
      for (std::size_t i = 0; i < b.n_inner(); ++i) sk += b.dw(o, i, k)[0];
    const double cnt = static_cast<double>(b.m_outer() * b.n_inner());
    const double mk = sk / cnt;
    for (std::size_t o = 0; o < b.m_outer(); ++o)
      for (std::size_t i = 0; i < b.n_inner(); ++i) ssk += std::pow(b.dw(o, i, k)[0] - mk, 2);
    EXPECT_LE(std::abs(mk), 4 * std::sqrt(grid.dt() / cnt));
    EXPECT_NEAR(ssk / (cnt - 1), grid.dt(), 0.1 * grid.dt());
  }
}

TEST(Generate, DwAndDbUncorrelated) {
  const auto grid = make_uniform_grid(1.0, 50);
  const auto b = generate(grid, config(200, 2));
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  std::size_t n = 0;
  for (std::size_t o = 0; o < b.m_outer(); ++o)
    for (std::size_t k = 0; k < grid.n_steps(); ++k, ++n) {
      const double x = b.dw(o, 0, k)[0], y = b.db(o, k)[0];
      sxy += x * y;
      sxx += x * x;
      syy += y * y;
    }
  const double corr = sxy / std::sqrt(sxx * syy);
  EXPECT_LE(std::abs(corr), 4.0 / std::sqrt(static_cast<double>(n)));
}

TEST(Generate, WorkerCountDoesNotChangeOutput) {
  const auto grid = make_uniform_grid(1.0, 10);
  BrownianBundle one = [&] {
    ScopedThreads t("1");
    return generate(grid, config(7, 30, 9, 2, 2));
  }();
  BrownianBundle many = [&] {
    ScopedThreads t("5");
    return generate(grid, config(7, 30, 9, 2, 2));
  }();
  EXPECT_TRUE(one == many);
}

TEST(Generate, CapacityErrorNamesCap) {
  auto c = config(10, 1000);
  c.memory_cap_bytes = 1000;
  try {
    generate(make_uniform_grid(1.0, 10), c);
    FAIL() << "expected CapacityError";
  } catch (const CapacityError& e) {
    EXPECT_EQ(e.cap_bytes(), 1000u);
    EXPECT_NE(std::string(e.what()).find("1000"), std::string::npos);
  }
}

TEST(Generate, RejectsSingleInnerSample) {
  EXPECT_THROW(generate(make_uniform_grid(1.0, 4), config(1, 1)), std::invalid_argument);
}

TEST(Cumulative, PathsStartAtZeroAndSumIncrements) {
  const auto grid = make_uniform_grid(1.0, 16);
  const auto b = generate(grid, config(3, 5, 4, 2, 1));
  const auto p = cumulative(b, 2, 3);
  EXPECT_EQ(p.w[0], 0.0);
  EXPECT_EQ(p.w[1], 0.0);
  EXPECT_EQ(p.b[0], 0.0);
  for (std::size_t j = 0; j < 2; ++j) {
    double s = 0.0;
    for (std::size_t k = 0; k < 16; ++k) s += b.dw(2, 3, k)[j];
    EXPECT_EQ(p.w[16 * 2 + j], s);
  }
  EXPECT_EQ(cumulative(b, 1, 0).b, cumulative(b, 1, 4).b);
  EXPECT_NE(cumulative(b, 1, 0).w, cumulative(b, 1, 4).w);
  EXPECT_THROW(cumulative(b, 3, 0), std::out_of_range);
  EXPECT_THROW(cumulative(b, 0, 5), std::out_of_range);
}

TEST(Antithetic, NegatedCopiesAndExactCancellation) {
  const auto grid = make_uniform_grid(1.0, 8);
  const auto b = generate(grid, config(3, 2));
  const auto e = antithetic_extend(b);
  ASSERT_EQ(e.n_inner(), 4u);
  for (std::size_t o = 0; o < 3; ++o)
    for (std::size_t j = 0; j < 2; ++j)
      for (std::size_t k = 0; k < 8; ++k) {
        EXPECT_EQ(e.dw(o, 2 + j, k)[0], -b.dw(o, j, k)[0]);
        EXPECT_EQ(e.dw(o, j, k)[0], b.dw(o, j, k)[0]);
      }
  for (std::size_t k = 0; k < 8; ++k) {
    double s = 0.0;
    for (std::size_t o = 0; o < 3; ++o)
      for (std::size_t i = 0; i < 2; ++i) s += e.dw(o, i, k)[0] + e.dw(o, i + 2, k)[0];
    EXPECT_EQ(s, 0.0);
  }
  const auto dba = b.db_all(), dbe = e.db_all();
  EXPECT_TRUE(std::equal(dba.begin(), dba.end(), dbe.begin(), dbe.end()));
}

TEST(BundleFile, RoundTripIsBitIdentical) {
  const auto grid = make_uniform_grid(0.75, 6);
  const auto b = generate(grid, config(2, 3, 77, 2, 3));
  std::stringstream ss;
  write_bundle(ss, b);
  const auto r = read_bundle(ss);
  EXPECT_TRUE(r == b);
  EXPECT_EQ(r.seed(), 77u);
  EXPECT_EQ(r.grid(), grid);
}

TEST(BundleFile, HeaderIsLittleEndian) {
  const auto b = generate(make_uniform_grid(1.0, 2), config(1, 2, 0x0102030405060708ULL));
  std::stringstream ss;
  write_bundle(ss, b);
  const std::string s = ss.str();
  ASSERT_EQ(s.substr(0, 8), "BDSDEBN1");
  EXPECT_EQ(static_cast<unsigned char>(s[8]), 0x08);
  EXPECT_EQ(static_cast<unsigned char>(s[15]), 0x01);
  // magic + 6 u64 + f64 + 1*2*2*1 dW + 1*2*1 dB
  EXPECT_EQ(s.size(), 8u + 7u * 8u + (4u + 2u) * 8u);
  std::stringstream bad("XXXXXXXX");
  EXPECT_THROW(read_bundle(bad), std::runtime_error);
}

#ifndef BDSDE_NOISE_HPP
#define BDSDE_NOISE_HPP

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/special_functions/erf.hpp>

#include "bdsde/errors.hpp"
#include "bdsde/parallel.hpp"
#include "bdsde/time_grid.hpp"

namespace bdsde {

// Philox4x32-10 (Salmon et al., "Parallel random numbers: as easy as 1, 2, 3").
// Counter-based: output is a pure function of (key, counter).
class Philox4x32 {
public:
  using Block = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Block generate(Block ctr, Key key) noexcept {
    for (int r = 0; r < 10; ++r) {
      if (r > 0) {
        key[0] += kW0;
        key[1] += kW1;
      }
      const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * ctr[0];
      const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * ctr[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
  }

private:
  static constexpr std::uint32_t kM0 = 0xD2511F53u;
  static constexpr std::uint32_t kM1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kW0 = 0x9E3779B9u;
  static constexpr std::uint32_t kW1 = 0xBB67AE85u;
};

inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Standard normal variates addressed by a 64-bit index. Two variates per
/// Philox block, each from 53 bits of one 64-bit half through the inverse CDF.
/// The stream id lives in the top counter word, so streams sharing a seed
/// never share a counter.
class NormalStream {
public:
  NormalStream(std::uint64_t seed, std::uint32_t stream_id) : stream_(stream_id) {
    const std::uint64_t k = splitmix64(seed);
    key_ = {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
  }

  double operator()(std::uint64_t index) const {
    const std::uint64_t block = index >> 1;
    const auto out = Philox4x32::generate(
        {static_cast<std::uint32_t>(block), static_cast<std::uint32_t>(block >> 32), 0u, stream_}, key_);
    const std::uint64_t bits = (index & 1u) == 0u ? (static_cast<std::uint64_t>(out[1]) << 32) | out[0]
                                                  : (static_cast<std::uint64_t>(out[3]) << 32) | out[2];
    // u in (0, 1), never exactly 0 or 1.
    const double u = (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
    return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * u);
  }

  static constexpr const char* method_name() { return "philox4x32-10 counter stream, inverse-CDF normal (boost erfc_inv)"; }

private:
  std::array<std::uint32_t, 2> key_{};
  std::uint32_t stream_;
};

struct NoiseConfig {
  std::uint64_t seed = 42;
  std::size_t m_outer = 1; // B realizations
  std::size_t n_inner = 2; // W realizations per B realization
  std::size_t d = 1;
  std::size_t l = 1;
  std::size_t memory_cap_bytes = std::size_t{2} << 30;
};

inline void check(const NoiseConfig& c) {
  if (c.m_outer < 1) throw std::invalid_argument("NoiseConfig: m_outer must be >= 1");
  if (c.n_inner < 2) throw std::invalid_argument("NoiseConfig: n_inner must be >= 2 (regression needs two samples)");
  if (c.d < 1 || c.l < 1) throw std::invalid_argument("NoiseConfig: d and l must be >= 1");
}

/// Increment clouds on a grid: dW is (outer, inner, step, dim) row-major,
/// dB is (outer, step, dim). Every inner sample of one outer index sees the
/// same B path.
class BrownianBundle {
public:
  BrownianBundle(TimeGrid grid, NoiseConfig config, std::vector<double> dw, std::vector<double> db,
                 std::string rng_method)
      : grid_(std::move(grid)), config_(config), dw_(std::move(dw)), db_(std::move(db)),
        rng_method_(std::move(rng_method)) {
    if (dw_.size() != config_.m_outer * config_.n_inner * grid_.n_steps() * config_.d ||
        db_.size() != config_.m_outer * grid_.n_steps() * config_.l)
      throw std::invalid_argument("BrownianBundle: increment array sizes do not match the configuration");
  }

  const TimeGrid& grid() const noexcept { return grid_; }
  const NoiseConfig& config() const noexcept { return config_; }
  std::size_t m_outer() const noexcept { return config_.m_outer; }
  std::size_t n_inner() const noexcept { return config_.n_inner; }
  std::size_t n_steps() const noexcept { return grid_.n_steps(); }
  std::size_t d() const noexcept { return config_.d; }
  std::size_t l() const noexcept { return config_.l; }
  std::uint64_t seed() const noexcept { return config_.seed; }
  const std::string& rng_method() const noexcept { return rng_method_; }

  std::span<const double> dw(std::size_t outer, std::size_t inner, std::size_t step) const {
    return {dw_.data() + ((outer * config_.n_inner + inner) * grid_.n_steps() + step) * config_.d, config_.d};
  }
  std::span<const double> db(std::size_t outer, std::size_t step) const {
    return {db_.data() + (outer * grid_.n_steps() + step) * config_.l, config_.l};
  }

  std::span<const double> dw_all() const noexcept { return dw_; }
  std::span<const double> db_all() const noexcept { return db_; }

  friend bool operator==(const BrownianBundle& a, const BrownianBundle& b) {
    return a.grid_ == b.grid_ && a.config_.seed == b.config_.seed && a.config_.m_outer == b.config_.m_outer &&
           a.config_.n_inner == b.config_.n_inner && a.config_.d == b.config_.d && a.config_.l == b.config_.l &&
           a.dw_ == b.dw_ && a.db_ == b.db_;
  }

private:
  TimeGrid grid_;
  NoiseConfig config_;
  std::vector<double> dw_;
  std::vector<double> db_;
  std::string rng_method_;
};

inline constexpr std::uint32_t kWStream = 0x57;  // 'W'
inline constexpr std::uint32_t kBStream = 0x42;  // 'B'

inline BrownianBundle generate(const TimeGrid& grid, const NoiseConfig& config) {
  check(config);
  const std::size_t n = grid.n_steps();
  const double total = static_cast<double>(config.m_outer) * static_cast<double>(config.n_inner) * n * config.d +
                       static_cast<double>(config.m_outer) * n * config.l;
  if (total * sizeof(double) > static_cast<double>(config.memory_cap_bytes))
    throw CapacityError("noise bundle needs " + std::to_string(static_cast<std::uint64_t>(total * sizeof(double))) +
                            " bytes, above memory_cap_bytes = " + std::to_string(config.memory_cap_bytes),
                        config.memory_cap_bytes);

  const double scale = std::sqrt(grid.dt());
  const NormalStream w_stream(config.seed, kWStream);
  const NormalStream b_stream(config.seed, kBStream);
  const std::size_t per_outer_w = config.n_inner * n * config.d;
  const std::size_t per_outer_b = n * config.l;
  std::vector<double> dw(config.m_outer * per_outer_w);
  std::vector<double> db(config.m_outer * per_outer_b);
  parallel_for(config.m_outer, [&](std::size_t o) {
    for (std::size_t q = 0; q < per_outer_w; ++q) {
      const std::size_t idx = o * per_outer_w + q;
      dw[idx] = scale * w_stream(idx);
    }
    for (std::size_t q = 0; q < per_outer_b; ++q) {
      const std::size_t idx = o * per_outer_b + q;
      db[idx] = scale * b_stream(idx);
    }
  });
  return BrownianBundle(grid, config, std::move(dw), std::move(db), NormalStream::method_name());
}

struct PathValues {
  std::vector<double> w; // (n+1) x d
  std::vector<double> b; // (n+1) x l
};

/// W and B at the grid nodes for one (outer, inner) sample; both start at 0.
inline PathValues cumulative(const BrownianBundle& bundle, std::size_t outer, std::size_t inner) {
  if (outer >= bundle.m_outer() || inner >= bundle.n_inner())
    throw std::out_of_range("cumulative: sample (" + std::to_string(outer) + ", " + std::to_string(inner) +
                            ") outside a bundle of " + std::to_string(bundle.m_outer()) + " x " +
                            std::to_string(bundle.n_inner()));
  const std::size_t n = bundle.n_steps(), d = bundle.d(), l = bundle.l();
  PathValues p{std::vector<double>((n + 1) * d, 0.0), std::vector<double>((n + 1) * l, 0.0)};
  for (std::size_t k = 0; k < n; ++k) {
    const auto dw = bundle.dw(outer, inner, k);
    const auto db = bundle.db(outer, k);
    for (std::size_t j = 0; j < d; ++j) p.w[(k + 1) * d + j] = p.w[k * d + j] + dw[j];
    for (std::size_t j = 0; j < l; ++j) p.b[(k + 1) * l + j] = p.b[k * l + j] + db[j];
  }
  return p;
}

/// Doubles the inner count: inner n_inner + j carries -dW of inner j. dB is untouched.
inline BrownianBundle antithetic_extend(const BrownianBundle& bundle) {
  NoiseConfig cfg = bundle.config();
  const std::size_t old_inner = cfg.n_inner;
  cfg.n_inner = 2 * old_inner;
  const std::size_t block = bundle.n_steps() * bundle.d();
  std::vector<double> dw(cfg.m_outer * cfg.n_inner * block);
  const auto src = bundle.dw_all();
  for (std::size_t o = 0; o < cfg.m_outer; ++o) {
    const double* in = src.data() + o * old_inner * block;
    double* out = dw.data() + o * cfg.n_inner * block;
    for (std::size_t q = 0; q < old_inner * block; ++q) {
      out[q] = in[q];
      out[old_inner * block + q] = -in[q];
    }
  }
  std::vector<double> db(bundle.db_all().begin(), bundle.db_all().end());
  return BrownianBundle(bundle.grid(), cfg, std::move(dw), std::move(db), bundle.rng_method() + " + antithetic");
}

// Binary layout, all little-endian:
//   "BDSDEBN1" | u64 seed | u64 d | u64 l | u64 m_outer | u64 n_inner | u64 n_steps | f64 T
//   | dW (outer, inner, step, dim) | dB (outer, step, dim)
namespace detail {

inline void put_u64(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
  os.write(b, 8);
}

inline std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw std::runtime_error("bundle file truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline constexpr char kBundleMagic[8] = {'B', 'D', 'S', 'D', 'E', 'B', 'N', '1'};

} // namespace detail

inline void write_bundle(std::ostream& os, const BrownianBundle& bundle) {
  os.write(detail::kBundleMagic, 8);
  detail::put_u64(os, bundle.seed());
  detail::put_u64(os, bundle.d());
  detail::put_u64(os, bundle.l());
  detail::put_u64(os, bundle.m_outer());
  detail::put_u64(os, bundle.n_inner());
  detail::put_u64(os, bundle.n_steps());
  detail::put_u64(os, std::bit_cast<std::uint64_t>(bundle.grid().horizon()));
  for (double v : bundle.dw_all()) detail::put_u64(os, std::bit_cast<std::uint64_t>(v));
  for (double v : bundle.db_all()) detail::put_u64(os, std::bit_cast<std::uint64_t>(v));
  if (!os) throw std::runtime_error("failed writing bundle");
}

inline BrownianBundle read_bundle(std::istream& is) {
  char magic[8];
  if (!is.read(magic, 8) || !std::equal(magic, magic + 8, detail::kBundleMagic))
    throw std::runtime_error("not a bundle file (bad magic)");
  NoiseConfig cfg;
  cfg.seed = detail::get_u64(is);
  cfg.d = detail::get_u64(is);
  cfg.l = detail::get_u64(is);
  cfg.m_outer = detail::get_u64(is);
  cfg.n_inner = detail::get_u64(is);
  const std::uint64_t n_steps = detail::get_u64(is);
  const double horizon = std::bit_cast<double>(detail::get_u64(is));
  check(cfg);
  TimeGrid grid(horizon, n_steps);
  std::vector<double> dw(cfg.m_outer * cfg.n_inner * n_steps * cfg.d);
  std::vector<double> db(cfg.m_outer * n_steps * cfg.l);
  for (double& v : dw) v = std::bit_cast<double>(detail::get_u64(is));
  for (double& v : db) v = std::bit_cast<double>(detail::get_u64(is));
  return BrownianBundle(grid, cfg, std::move(dw), std::move(db), "replayed from bundle file");
}

} // namespace bdsde

#endif // BDSDE_NOISE_HPP

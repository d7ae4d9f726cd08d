#pragma once

// Deterministic randomness. Every random quantity in the repo derives from a
// single root seed through derive_seed(root, stream, substream): the root is
// hashed together with the stream ids by the splitmix64 finalizer, and the
// result seeds an independent mt19937_64. Replicate r of any Monte-Carlo loop
// uses stream id r, so results never depend on execution order or thread
// count. Distributions are hand-rolled on top of the raw 64-bit stream
// because the std:: distributions are not pinned across standard libraries.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace indist {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace detail

inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream,
                                 std::uint64_t substream = 0) {
  std::uint64_t h = detail::splitmix64(root);
  h = detail::splitmix64(h ^ (stream + 0x9E3779B97F4A7C15ULL));
  h = detail::splitmix64(h ^ (substream + 0xBF58476D1CE4E5B9ULL));
  return h;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next() { return gen_(); }

  // uniform on [0, 1) with 53 random bits
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // unbiased-enough index draw (multiply-shift); n must be > 0
  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(
        (static_cast<unsigned __int128>(gen_()) * n) >> 64);
  }

  bool bernoulli(double p) { return uniform() < p; }

  int sign() { return (gen_() >> 63) ? 1 : -1; }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace indist

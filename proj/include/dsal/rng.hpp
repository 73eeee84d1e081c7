#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <sstream>
#include <string>

#include "dsal/error.hpp"

namespace dsal {

// splitmix64 generator. Small state, fast, and trivially serializable so a
// checkpoint can restore the exact stream position.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n)
  uint64_t uniform_int(uint64_t n) {
    uint64_t lim = ~uint64_t(0) - ~uint64_t(0) % n;
    uint64_t v;
    do {
      v = next_u64();
    } while (v >= lim);
    return v % n;
  }

  // Box-Muller, standard normal. The spare value is part of the state.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    constexpr double kTau = 6.28318530717958647692;
    spare_ = r * std::sin(kTau * u2);
    have_spare_ = true;
    return r * std::cos(kTau * u2);
  }

  // Derive an independent generator for (worker, sample) style keys.
  Rng split(uint64_t key) const {
    Rng r(state_ ^ (0x9e3779b97f4a7c15ull * (key + 0x632be59bd9b4e019ull)));
    r.next_u64();
    return r;
  }

  std::string serialize() const {
    std::ostringstream os;
    uint64_t spare_bits;
    static_assert(sizeof(spare_bits) == sizeof(spare_));
    std::memcpy(&spare_bits, &spare_, sizeof(spare_bits));
    os << state_ << ' ' << (have_spare_ ? 1 : 0) << ' ' << spare_bits;
    return os.str();
  }

  static Rng deserialize(const std::string& s) {
    std::istringstream is(s);
    Rng r;
    int have = 0;
    uint64_t spare_bits = 0;
    if (!(is >> r.state_ >> have >> spare_bits))
      throw Error("checkpoint-error", "bad rng state string: " + s);
    r.have_spare_ = have != 0;
    std::memcpy(&r.spare_, &spare_bits, sizeof(r.spare_));
    return r;
  }

 private:
  uint64_t state_ = 0;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace dsal

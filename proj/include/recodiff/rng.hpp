#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "recodiff/mat.hpp"

namespace recodiff {

// splitmix64, used to derive independent stream seeds from (seed, tags).
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t seed, uint64_t tag) { return mix64(mix64(seed) ^ tag); }

inline uint64_t derive_seed(uint64_t seed, uint64_t tag1, uint64_t tag2) {
    return mix64(derive_seed(seed, tag1) ^ mix64(tag2 + 0x6a09e667f3bcc909ULL));
}

// Deterministic RNG stream. Uniforms and gaussians are built directly from
// mt19937_64 output words, so sequences are identical across platforms
// (std::normal_distribution is not portable; this is).
class Rng {
  public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    uint64_t next_u64() { return eng_(); }

    // uniform in (0, 1): never returns 0 so it is log-safe
    double uniform() {
        return (static_cast<double>(eng_() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [lo, hi] inclusive
    int uniform_int(int lo, int hi) {
        const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(eng_() % span);
    }

    // Box-Muller
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    void fill_normal(Mat& m, double std_dev = 1.0) {
        for (double& v : m.a) v = std_dev * normal();
    }

    void fill_uniform(Mat& m, double lo, double hi) {
        for (double& v : m.a) v = uniform(lo, hi);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = eng_() % i;
            std::swap(v[i - 1], v[j]);
        }
    }

  private:
    std::mt19937_64 eng_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

inline Mat random_normal(int rows, int cols, Rng& rng, double std_dev = 1.0) {
    Mat m(rows, cols);
    rng.fill_normal(m, std_dev);
    return m;
}

}  // namespace recodiff

// Seeded random numbers with a fixed, library-independent realization, so
// sweeps reproduce bit-for-bit across platforms and standard libraries.
#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace aet {

class Rng {
  public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    // derived stream for independent trials
    static Rng derived(std::uint64_t seed, std::uint64_t stream) {
        return Rng(seed * 0x9E3779B97F4A7C15ull + 0x632BE59BD9B4E019ull * (stream + 1));
    }

    double uniform() {  // [0, 1)
        return (eng_() >> 11) * 0x1.0p-53;
    }

    double uniform(double a, double b) { return a + (b - a) * uniform(); }

    // Box-Muller; avoids implementation-defined std::normal_distribution
    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

  private:
    std::mt19937_64 eng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace aet

#include "peftcl/rng.hpp"

#include <cmath>

namespace peftcl {
namespace {

inline uint64_t splitmix(uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

constexpr double kInv53 = 1.0 / 9007199254740992.0;  // 2^-53

}  // namespace

uint64_t Rng::bits(uint64_t stream, uint64_t counter) const {
    uint64_t h = splitmix(seed_);
    h = splitmix(h ^ splitmix(stream ^ 0xA0761D6478BD642FULL));
    h = splitmix(h ^ splitmix(counter ^ 0xE7037ED1A0B428DBULL));
    return h;
}

double Rng::uniform01(uint64_t stream, uint64_t counter) const {
    return static_cast<double>(bits(stream, counter) >> 11) * kInv53;
}

double Rng::uniform(uint64_t stream, uint64_t counter, double lo, double hi) const {
    return lo + (hi - lo) * uniform01(stream, counter);
}

double Rng::gaussian(uint64_t stream, uint64_t counter) const {
    double u1 = uniform01(stream, 2 * counter);
    double u2 = uniform01(stream, 2 * counter + 1);
    if (u1 <= 0.0) u1 = kInv53;  // keep log finite
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

void Rng::fill_uniform(std::vector<double>& out, uint64_t stream, double lo, double hi) const {
    for (size_t i = 0; i < out.size(); ++i) out[i] = uniform(stream, i, lo, hi);
}

void Rng::fill_gaussian(std::vector<double>& out, uint64_t stream, double mean,
                        double stddev) const {
    for (size_t i = 0; i < out.size(); ++i) out[i] = mean + stddev * gaussian(stream, i);
}

double Rng::Stream::next_uniform01() { return Rng(seed_).uniform01(stream_, counter_++); }

double Rng::Stream::next_gaussian() { return Rng(seed_).gaussian(stream_, counter_++); }

uint64_t Rng::Stream::next_below(uint64_t n) {
    // multiply-shift bounded draw; bias is ~n/2^64, irrelevant here
    const uint64_t b = Rng(seed_).bits(stream_, counter_++);
    return static_cast<uint64_t>((static_cast<__uint128_t>(b) * n) >> 64);
}

}  // namespace peftcl

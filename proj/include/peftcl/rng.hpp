#pragma once

#include <cstdint>
#include <vector>

// Counter-based generator: draw i of (seed, stream) is a pure hash, so two
// call sites never share draws as long as they use distinct stream ids, and
// reordering code cannot change what a given site sees.

namespace peftcl {

namespace rng_stream {
// Fixed stream-id regions. Call sites take one of these (plus a documented
// offset where a family of streams is needed, e.g. per-restart or per-task).
inline constexpr uint64_t kBackboneInit = 0x0100;
inline constexpr uint64_t kPromptInit = 0x0200;    // + expert/module index
inline constexpr uint64_t kLoraInit = 0x0300;      // + expert/module index
inline constexpr uint64_t kPoolKeys = 0x0400;
inline constexpr uint64_t kKmeans = 0x0500;        // + restart index
inline constexpr uint64_t kShuffle = 0x0600;       // + task index * 0x100 + epoch
inline constexpr uint64_t kDataTrain = 0x10000;    // + task index
inline constexpr uint64_t kDataTest = 0x20000;     // + task index
inline constexpr uint64_t kDataPretext = 0x30000;
inline constexpr uint64_t kHeadInit = 0x0700;      // + expert index
inline constexpr uint64_t kTest = 0xF000;          // unit tests
}  // namespace rng_stream

class Rng {
  public:
    explicit Rng(uint64_t seed) : seed_(seed) {}

    uint64_t seed() const { return seed_; }

    uint64_t bits(uint64_t stream, uint64_t counter) const;
    // [0, 1)
    double uniform01(uint64_t stream, uint64_t counter) const;
    double uniform(uint64_t stream, uint64_t counter, double lo, double hi) const;
    // standard normal via Box-Muller; consumes counters 2i and 2i+1 of the stream
    double gaussian(uint64_t stream, uint64_t counter) const;

    void fill_uniform(std::vector<double>& out, uint64_t stream, double lo, double hi) const;
    void fill_gaussian(std::vector<double>& out, uint64_t stream, double mean,
                       double stddev) const;

    // Sequential view of one stream for algorithms that draw a data-dependent
    // number of values (k-means++, shuffles). One owner per stream id.
    class Stream {
      public:
        Stream(uint64_t seed, uint64_t stream) : seed_(seed), stream_(stream) {}
        double next_uniform01();
        double next_gaussian();
        // uniform integer in [0, n)
        uint64_t next_below(uint64_t n);
        template <typename T>
        void shuffle(std::vector<T>& v) {
            for (size_t i = v.size(); i > 1; --i) {
                size_t j = static_cast<size_t>(next_below(i));
                std::swap(v[i - 1], v[j]);
            }
        }

      private:
        uint64_t seed_;
        uint64_t stream_;
        uint64_t counter_ = 0;
    };

    Stream stream(uint64_t stream_id) const { return Stream(seed_, stream_id); }

  private:
    uint64_t seed_;
};

}  // namespace peftcl

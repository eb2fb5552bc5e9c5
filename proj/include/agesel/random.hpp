#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace agesel {

// Purpose tags used when deriving substreams. Values are part of the
// reproducibility contract; do not renumber.
enum class StreamPurpose : std::uint64_t {
  kDatasetMeans = 1,
  kDatasetTrain = 2,
  kDatasetEval = 3,
  kPartition = 4,
  kInit = 5,
  kSelection = 6,
  kLocalSgd = 7,
};

// Seedable deterministic stream.
//
// Splitting scheme: every stream carries a 64-bit key. derive() hashes the
// parent key with the given words (SplitMix64 finalizer chained over the
// words) and returns a fresh stream seeded from the result. Derivation
// depends only on the key, never on how many draws the parent has made, so a
// substream for (run, round, purpose) is the same regardless of what else
// happened in the run.
//
// Draws are produced by std::mt19937_64, whose output sequence is fixed by
// the C++ standard. Conversions to doubles, bounded integers and normals are
// implemented here rather than through <random> distributions, whose
// algorithms differ between standard library implementations.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed);

  RandomStream derive(std::initializer_list<std::uint64_t> words) const;
  RandomStream derive(StreamPurpose purpose, std::initializer_list<std::uint64_t> words = {}) const;

  std::uint64_t key() const noexcept { return key_; }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 bits of resolution.
  double uniform01();

  // Uniform on [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Unbiased integer in [0, n); n must be positive.
  std::uint64_t uniform_index(std::uint64_t n);

  // Standard normal via Box-Muller (one value per call, no caching).
  double normal();

  // Gamma(shape, 1) via Marsaglia-Tsang.
  double gamma(double shape);

 private:
  std::uint64_t key_;
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

}  // namespace agesel

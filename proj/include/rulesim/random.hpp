#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include <boost/random/normal_distribution.hpp>

#include "rulesim/types.hpp"

namespace rulesim {

/// Portable random stream.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. The standard's distributions are implementation-defined, so
/// variates come from Boost.Random, whose algorithms are fixed by its source:
///   uniform()  53 high engine bits scaled to [0, 1)
///   normal()   boost::random::normal_distribution (ziggurat)
///   below(n)   boost::random::uniform_int_distribution
/// Identical seeds give identical streams on any platform with the same
/// Boost release and floating-point settings.
class Rng {
 public:
  explicit Rng(Seed seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal() { return normal_(engine_); }
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n);

 private:
  std::mt19937_64 engine_;
  boost::random::normal_distribution<double> normal_;
};

/// Child seed for a named stream; splitmix64 over (base, FNV-1a(stream), index).
Seed derive_seed(Seed base, std::string_view stream, std::uint64_t index = 0);

/// First `count` entries of a Fisher-Yates shuffle of 0..n-1.
std::vector<int> sample_without_replacement(int n, int count, Rng& rng);

std::uint64_t fnv1a(std::string_view text);

}  // namespace rulesim

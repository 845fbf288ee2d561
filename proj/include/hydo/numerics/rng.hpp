#pragma once

#include <cstdint>
#include <string_view>

namespace hydo {

/// Counter-based random stream.
///
/// Output i of a stream is a pure function of (key, i), so a stream is fully
/// described by two integers and can be checkpointed, copied, or split into
/// labelled sub-streams without coordination. Mixing follows SplitMix64.
class RngStream {
 public:
  RngStream() = default;
  RngStream(std::uint64_t key, std::uint64_t counter) : key_(key), counter_(counter) {}

  std::uint64_t next_u64();
  double uniform();                        // [0, 1)
  double uniform(double lo, double hi);    // [lo, hi)
  double normal();                         // standard normal, Box-Muller
  std::uint64_t uniform_index(std::uint64_t n);  // [0, n), unbiased

  // Independent stream derived from this one's key; does not advance this one.
  RngStream split(std::string_view label) const;
  RngStream split(std::string_view label, std::uint64_t index) const;

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

  bool operator==(const RngStream&) const = default;

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

RngStream seeded_rng(std::uint64_t seed);

std::uint64_t mix64(std::uint64_t x);

}  // namespace hydo

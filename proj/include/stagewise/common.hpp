#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace stagewise {

/// Days since experiment start. Day 0 is the first day of the experiment.
using Day = int;

/// Malformed input: bad CSV, bad config, violated roster invariant.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A computation could not produce a value (empty arm, non-convergence, ...).
class AnalysisError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// splitmix64 finalizer; used to derive independent stream seeds from
/// (master seed, index) so replicate order never changes results.
inline std::uint64_t mix_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Shortest round-trip decimal representation.
std::string format_double(double value);

// Parses the whole string as a double; throws ValidationError otherwise.
double parse_double(const std::string& text, const std::string& what);
long long parse_integer(const std::string& text, const std::string& what);

}  // namespace stagewise

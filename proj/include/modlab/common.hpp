#pragma once

#include <cstddef>
#include <cstdint>
#include <compare>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace modlab {

/// Number of ordinal classes on the misogyny scale (0 = absent .. 4 = extreme).
inline constexpr int kNumLabels = 5;

/// Input failed a contract check (bad value, bad reference, bad state).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A referenced entity does not exist.
class NotFoundError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Filesystem or stream failure.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Severity label on the 0..4 scale.
class Label {
 public:
  constexpr Label() = default;
  explicit Label(int value);

  constexpr int value() const { return value_; }
  auto operator<=>(const Label&) const = default;

 private:
  int value_ = 0;
};

/// Human-readable caption of a label value ("none", "mild", ...).
const char* label_caption(int value);

/// 0 stays 0; 1..4 map to 1.
constexpr int binarize(Label label) { return label.value() > 0 ? 1 : 0; }
constexpr int binarize(int label) { return label > 0 ? 1 : 0; }

std::vector<Label> to_labels(const std::vector<int>& values);

/// Mixes a base seed with a stream id so independent consumers get
/// decorrelated generators (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Seeded generator with platform-independent derived distributions.
/// std::uniform_int_distribution and friends are implementation-defined,
/// so everything here is built on the raw mt19937_64 stream.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform integer in [0, n); n > 0.
  std::size_t uniform_index(std::size_t n);
  /// Uniform double in [0, 1).
  double uniform01();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  template <typename T>
  void shuffle(std::vector<T>& values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::swap(values[i - 1], values[uniform_index(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace modlab

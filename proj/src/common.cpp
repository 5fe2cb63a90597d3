#include "modlab/common.hpp"

#include <limits>

namespace modlab {

Label::Label(int value) : value_(value) {
  if (value < 0 || value >= kNumLabels) {
    throw ValidationError("label " + std::to_string(value) +
                          " outside valid range 0..4");
  }
}

const char* label_caption(int value) {
  switch (value) {
    case 0: return "none";
    case 1: return "mild";
    case 2: return "present";
    case 3: return "strong";
    case 4: return "extreme";
  }
  return "invalid";
}

std::vector<Label> to_labels(const std::vector<int>& values) {
  std::vector<Label> out;
  out.reserve(values.size());
  for (int v : values) out.emplace_back(v);
  return out;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::size_t Rng::uniform_index(std::size_t n) {
  // Rejection sampling over the largest multiple of n.
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit =
      std::numeric_limits<std::uint64_t>::max() -
      std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t r = engine_();
  while (r >= limit) r = engine_();
  return static_cast<std::size_t>(r % bound);
}

double Rng::uniform01() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

}  // namespace modlab

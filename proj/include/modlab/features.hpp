#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "modlab/ordinal_core.hpp"
#include "modlab/resolve.hpp"

namespace modlab {

using FeatureTable = std::map<std::string, std::vector<double>>;

/// Reads `{posting_id, features: [...]}` JSON lines (.jsonl) or
/// `posting_id<TAB>f1<TAB>f2...` rows (.tsv). All rows must share one
/// dimension of finite values.
FeatureTable read_feature_file(const std::filesystem::path& path);

/// Joins gold targets with feature vectors; every record needs features.
Dataset join_features(const std::vector<GoldRecord>& records, const FeatureTable& features);

/// x ~ U(0, 5), label = clamp(floor(x), 0, 4), binary = binarize(label).
Dataset synthetic_ordinal(std::size_t n, std::uint64_t seed);

/// Points in [-3, 3]^2 labeled by the side of the line x0 + x1 = 0, with
/// a band of width 1 around the line left empty (margin 1). Label is the
/// binary class (0 or 1) in both targets.
Dataset synthetic_binary(std::size_t n, std::uint64_t seed);

/// Generator by name: "synth-ordinal" or "synth-binary".
Dataset synthetic_dataset(const std::string& name, std::size_t n, std::uint64_t seed);

}  // namespace modlab

#include "modlab/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace modlab {

FeatureTable read_feature_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read feature file " + path.string());
  const bool tsv = path.extension() == ".tsv";
  FeatureTable table;
  std::size_t dim = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path.filename().string() + " line " + std::to_string(line_no) + ": ";
    std::string id;
    std::vector<double> values;
    try {
      if (tsv) {
        std::istringstream fields(line);
        std::string cell;
        std::getline(fields, id, '\t');
        while (std::getline(fields, cell, '\t')) values.push_back(std::stod(cell));
      } else {
        const auto j = nlohmann::json::parse(line);
        id = j.at("posting_id").get<std::string>();
        values = j.at("features").get<std::vector<double>>();
      }
    } catch (const std::exception& e) {
      throw ValidationError(where + "malformed feature row: " + e.what());
    }
    if (id.empty() || values.empty()) throw ValidationError(where + "missing id or features");
    for (double v : values) {
      if (!std::isfinite(v)) throw ValidationError(where + "non-finite feature");
    }
    if (dim == 0) dim = values.size();
    if (values.size() != dim) {
      throw ValidationError(where + "dimension " + std::to_string(values.size()) +
                            ", expected " + std::to_string(dim));
    }
    table[id] = std::move(values);
  }
  return table;
}

Dataset join_features(const std::vector<GoldRecord>& records, const FeatureTable& features) {
  Dataset data;
  data.samples.reserve(records.size());
  for (const auto& r : records) {
    auto it = features.find(r.posting_id);
    if (it == features.end()) throw NotFoundError("no features for posting '" + r.posting_id + "'");
    data.samples.push_back({r.posting_id, it->second, r.gold_label.value(), r.gold_binary});
  }
  return data;
}

Dataset synthetic_ordinal(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Dataset data;
  data.samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = rng.uniform(0.0, 5.0);
    const int label = std::clamp(static_cast<int>(std::floor(x)), 0, kNumLabels - 1);
    data.samples.push_back({"s" + std::to_string(i), {x}, label, binarize(label)});
  }
  return data;
}

Dataset synthetic_binary(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Dataset data;
  data.samples.reserve(n);
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  while (data.samples.size() < n) {
    const double x0 = rng.uniform(-3.0, 3.0);
    const double x1 = rng.uniform(-3.0, 3.0);
    const double side = (x0 + x1) * inv_sqrt2;  // signed distance to the line
    if (std::abs(side) < 0.5) continue;
    const int label = side > 0.0 ? 1 : 0;
    data.samples.push_back({"s" + std::to_string(data.samples.size()), {x0, x1}, label, label});
  }
  return data;
}

Dataset synthetic_dataset(const std::string& name, std::size_t n, std::uint64_t seed) {
  if (name == "synth-ordinal") return synthetic_ordinal(n, seed);
  if (name == "synth-binary") return synthetic_binary(n, seed);
  throw ValidationError("unknown synthetic feature set '" + name +
                        "' (expected synth-ordinal or synth-binary)");
}

}  // namespace modlab

#include "modlab/resolve.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>

namespace modlab {
namespace {

void require_labels(std::span<const Label> labels) {
  if (labels.empty()) throw ValidationError("cannot resolve an empty label multiset");
}

std::string escape_tsv(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\\': out += "\\\\"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string unescape_tsv(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\' || i + 1 == s.size()) {
      out.push_back(s[i]);
      continue;
    }
    switch (s[++i]) {
      case 't': out.push_back('\t'); break;
      case 'n': out.push_back('\n'); break;
      case 'r': out.push_back('\r'); break;
      case '\\': out.push_back('\\'); break;
      default:
        out.push_back('\\');
        out.push_back(s[i]);
    }
  }
  return out;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find('\t', start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

int class_of(const GoldRecord& r, StratifyOn target) {
  return target == StratifyOn::Label ? r.gold_label.value() : r.gold_binary;
}

}  // namespace

std::string_view to_string(Strategy strategy) {
  return strategy == Strategy::MostFrequent ? "most_frequent" : "max";
}

Strategy parse_strategy(std::string_view text) {
  if (text == "most_frequent") return Strategy::MostFrequent;
  if (text == "max") return Strategy::Max;
  throw ValidationError("unknown strategy '" + std::string(text) +
                        "' (expected most_frequent or max)");
}

Label resolve_most_frequent(std::span<const Label> labels) {
  require_labels(labels);
  std::array<int, kNumLabels> counts{};
  for (Label l : labels) ++counts[l.value()];
  int best = 0;
  for (int c = 1; c < kNumLabels; ++c) {
    if (counts[c] >= counts[best]) best = c;
  }
  return Label(best);
}

Label resolve_max(std::span<const Label> labels) {
  require_labels(labels);
  return *std::max_element(labels.begin(), labels.end());
}

int binary_target(std::span<const Label> labels, Strategy strategy, BinaryRule rule) {
  require_labels(labels);
  if (strategy == Strategy::Max) return binarize(resolve_max(labels));
  if (rule == BinaryRule::BinarizeResolved) return binarize(resolve_most_frequent(labels));
  std::size_t positive = 0;
  for (Label l : labels) positive += static_cast<std::size_t>(binarize(l));
  return 2 * positive >= labels.size() ? 1 : 0;
}

std::vector<GoldRecord> resolve_gold(const CorpusState& state, Strategy strategy,
                                     BinaryRule rule) {
  std::vector<GoldRecord> out;
  for (const auto& [id, posting] : state.postings) {
    const auto labels = state.labels_for(id);
    if (labels.empty()) continue;
    const Label gold =
        strategy == Strategy::Max ? resolve_max(labels) : resolve_most_frequent(labels);
    out.push_back({id, gold, binary_target(labels, strategy, rule), strategy});
  }
  return out;
}

std::vector<std::string> FoldPlan::test_ids(std::size_t fold) const {
  std::vector<std::string> out;
  for (const auto& [id, f] : assignment) {
    if (f == fold) out.push_back(id);
  }
  return out;
}

std::vector<std::string> FoldPlan::train_ids(std::size_t fold) const {
  std::vector<std::string> out;
  for (const auto& [id, f] : assignment) {
    if (f != fold && !dev_ids.at(fold).contains(id)) out.push_back(id);
  }
  return out;
}

std::vector<std::string> FoldPlan::dev_ids_of(std::size_t fold) const {
  const auto& ids = dev_ids.at(fold);
  return {ids.begin(), ids.end()};
}

FoldPlan stratified_folds(const std::vector<GoldRecord>& records, std::size_t k,
                          double dev_fraction, std::uint64_t seed, StratifyOn target) {
  if (k < 2) throw ValidationError("need at least 2 folds");
  if (!(dev_fraction >= 0.0 && dev_fraction < 1.0)) {
    throw ValidationError("dev fraction must lie in [0, 1)");
  }
  if (records.empty()) throw ValidationError("no records to split");

  std::map<int, std::vector<std::string>> by_class;
  std::map<std::string, int> class_of_id;
  for (const auto& r : records) {
    if (!class_of_id.emplace(r.posting_id, class_of(r, target)).second) {
      throw ValidationError("duplicate record for posting '" + r.posting_id + "'");
    }
    by_class[class_of(r, target)].push_back(r.posting_id);
  }

  FoldPlan plan;
  plan.k = k;
  plan.dev_fraction = dev_fraction;
  plan.seed = seed;
  plan.dev_ids.resize(k);

  std::size_t smallest = records.size();
  std::size_t offset = 0;
  for (auto& [cls, ids] : by_class) {
    smallest = std::min(smallest, ids.size());
    std::sort(ids.begin(), ids.end());
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(cls)));
    rng.shuffle(ids);
    for (std::size_t j = 0; j < ids.size(); ++j) plan.assignment[ids[j]] = (offset + j) % k;
    offset += ids.size();
  }
  if (k > smallest) {
    plan.warning = "k=" + std::to_string(k) + " exceeds the smallest class count (" +
                   std::to_string(smallest) + "); some folds lack that class";
  }

  for (std::size_t fold = 0; fold < k; ++fold) {
    for (const auto& [cls, ids] : by_class) {
      std::vector<std::string> pool;
      for (const auto& id : ids) {
        if (plan.assignment.at(id) != fold) pool.push_back(id);
      }
      std::sort(pool.begin(), pool.end());
      Rng rng(derive_seed(seed, 1000 + fold * kNumLabels + static_cast<std::uint64_t>(cls)));
      rng.shuffle(pool);
      const auto n_dev = static_cast<std::size_t>(
          std::llround(dev_fraction * static_cast<double>(pool.size())));
      plan.dev_ids[fold].insert(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_dev));
    }
  }
  return plan;
}

std::vector<std::filesystem::path> export_training_set(
    const std::vector<GoldRecord>& records, const FoldPlan& plan,
    const std::map<std::string, std::string>& texts, const std::filesystem::path& directory,
    ExportFormat format) {
  std::map<std::string, const GoldRecord*> by_id;
  for (const auto& r : records) {
    if (!plan.assignment.contains(r.posting_id)) {
      throw ValidationError("fold plan does not cover posting '" + r.posting_id + "'");
    }
    if (!texts.contains(r.posting_id)) {
      throw NotFoundError("posting '" + r.posting_id + "' has no text (deleted?)");
    }
    by_id[r.posting_id] = &r;
  }

  std::error_code ec;
  std::filesystem::create_directories(directory, ec);
  if (ec) throw IoError("cannot create " + directory.string());

  const std::string ext = format == ExportFormat::Tsv ? ".tsv" : ".jsonl";
  auto write_split = [&](std::size_t fold, const char* split,
                         const std::vector<std::string>& ids) {
    const auto path = directory / ("fold" + std::to_string(fold) + "." + split + ext);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    if (format == ExportFormat::Tsv) out << "posting_id\ttext\tgold_label\tgold_binary\n";
    for (const auto& id : ids) {
      auto it = by_id.find(id);
      if (it == by_id.end()) continue;
      const GoldRecord& r = *it->second;
      const std::string& text = texts.at(id);
      if (format == ExportFormat::Tsv) {
        out << escape_tsv(id) << '\t' << escape_tsv(text) << '\t' << r.gold_label.value() << '\t'
            << r.gold_binary << '\n';
      } else {
        out << nlohmann::json{{"posting_id", id},
                              {"text", text},
                              {"gold_label", r.gold_label.value()},
                              {"gold_binary", r.gold_binary}}
                   .dump()
            << '\n';
      }
    }
    if (!out) throw IoError("write failed for " + path.string());
    return path;
  };

  std::vector<std::filesystem::path> paths;
  for (std::size_t fold = 0; fold < plan.k; ++fold) {
    paths.push_back(write_split(fold, "train", plan.train_ids(fold)));
    paths.push_back(write_split(fold, "dev", plan.dev_ids_of(fold)));
    paths.push_back(write_split(fold, "test", plan.test_ids(fold)));
  }
  return paths;
}

std::vector<TrainingRow> read_training_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  const bool tsv = path.extension() == ".tsv";
  std::vector<TrainingRow> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (tsv && line_no == 1) continue;  // header
    try {
      TrainingRow row;
      if (tsv) {
        const auto fields = split_tabs(line);
        if (fields.size() != 4) throw ValidationError("expected 4 columns");
        row.posting_id = unescape_tsv(fields[0]);
        row.text = unescape_tsv(fields[1]);
        row.gold_label = Label(std::stoi(fields[2]));
        row.gold_binary = std::stoi(fields[3]);
      } else {
        const auto j = nlohmann::json::parse(line);
        row.posting_id = j.at("posting_id").get<std::string>();
        row.text = j.at("text").get<std::string>();
        row.gold_label = Label(j.at("gold_label").get<int>());
        row.gold_binary = j.at("gold_binary").get<int>();
      }
      rows.push_back(std::move(row));
    } catch (const std::exception& e) {
      throw ValidationError(path.filename().string() + " line " + std::to_string(line_no) +
                            ": " + e.what());
    }
  }
  return rows;
}

nlohmann::json to_json(const FoldPlan& plan) {
  nlohmann::json folds = nlohmann::json::array();
  for (std::size_t f = 0; f < plan.k; ++f) {
    folds.push_back(nlohmann::json{{"fold", f},
                                   {"test", plan.test_ids(f)},
                                   {"dev", plan.dev_ids_of(f)},
                                   {"train", plan.train_ids(f)}});
  }
  nlohmann::json j{{"k", plan.k},
                   {"dev_fraction", plan.dev_fraction},
                   {"seed", plan.seed},
                   {"folds", std::move(folds)}};
  if (!plan.warning.empty()) j["warning"] = plan.warning;
  return j;
}

}  // namespace modlab

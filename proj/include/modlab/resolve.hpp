#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "modlab/common.hpp"
#include "modlab/corpus_store.hpp"

namespace modlab {

enum class Strategy { MostFrequent, Max };

std::string_view to_string(Strategy strategy);
Strategy parse_strategy(std::string_view text);

/// How the most-frequent strategy derives its binary target.
enum class BinaryRule {
  MajorityOfBinarized,  // binarize every label, majority vote, tie -> 1
  BinarizeResolved,     // binarize(resolve_most_frequent(labels))
};

struct GoldRecord {
  std::string posting_id;
  Label gold_label;
  int gold_binary = 0;
  Strategy strategy = Strategy::MostFrequent;

  bool operator==(const GoldRecord&) const = default;
};

/// Mode of the multiset; ties go to the largest tied label.
Label resolve_most_frequent(std::span<const Label> labels);

/// Largest label ("when in doubt, positive").
Label resolve_max(std::span<const Label> labels);

int binary_target(std::span<const Label> labels, Strategy strategy,
                  BinaryRule rule = BinaryRule::MajorityOfBinarized);

/// One gold record per annotated posting, in posting id order.
std::vector<GoldRecord> resolve_gold(const CorpusState& state, Strategy strategy,
                                     BinaryRule rule = BinaryRule::MajorityOfBinarized);

/// Which target the fold stratification balances.
enum class StratifyOn { Label, Binary };

struct FoldPlan {
  std::size_t k = 5;
  double dev_fraction = 0.10;
  std::uint64_t seed = 0;
  std::map<std::string, std::size_t> assignment;  // posting id -> test fold
  /// dev_ids[f]: ids held out as dev when fold f is the test fold; the rest
  /// of the non-test records train.
  std::vector<std::set<std::string>> dev_ids;
  std::string warning;  // set when k exceeds the smallest class count

  std::vector<std::string> test_ids(std::size_t fold) const;
  std::vector<std::string> train_ids(std::size_t fold) const;
  std::vector<std::string> dev_ids_of(std::size_t fold) const;
};

/// Class-stratified k-fold split with a class-stratified dev split inside
/// each training part. Within each class the ids are shuffled (seeded) and
/// dealt round-robin into the folds.
FoldPlan stratified_folds(const std::vector<GoldRecord>& records, std::size_t k = 5,
                          double dev_fraction = 0.10, std::uint64_t seed = 0,
                          StratifyOn target = StratifyOn::Label);

enum class ExportFormat { Tsv, Jsonl };

struct TrainingRow {
  std::string posting_id;
  std::string text;
  Label gold_label;
  int gold_binary = 0;

  bool operator==(const TrainingRow&) const = default;
};

/// Writes fold{i}.{train|dev|test}.{tsv|jsonl} into `directory` (i from 0).
/// Returns the paths written. Throws NotFoundError when a record's posting
/// has no text.
std::vector<std::filesystem::path> export_training_set(
    const std::vector<GoldRecord>& records, const FoldPlan& plan,
    const std::map<std::string, std::string>& texts, const std::filesystem::path& directory,
    ExportFormat format);

/// Reads back one exported file (format from extension).
std::vector<TrainingRow> read_training_file(const std::filesystem::path& path);

nlohmann::json to_json(const FoldPlan& plan);

}  // namespace modlab

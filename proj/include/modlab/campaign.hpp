#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "modlab/corpus_store.hpp"

namespace modlab {

inline constexpr std::size_t kDefaultRoundSize = 100;
inline constexpr std::size_t kDefaultAnnotatorsPerRound = 3;

/// Ids of annotators flagged active, sorted.
std::vector<std::string> active_annotators(const CorpusState& state);

/// Creates a round given to every listed annotator.
Round create_calibration_round(Store& store, const std::vector<std::string>& posting_ids,
                               const std::vector<std::string>& annotators);

/// Creates a regular round assigned to k annotators drawn uniformly without
/// replacement from `available` (deterministic given seed).
Round create_round(Store& store, const std::vector<std::string>& posting_ids,
                   const std::vector<std::string>& available, std::size_t k,
                   std::uint64_t seed);

/// Pairwise label distance: presence vs absence is the maximal distance 4,
/// otherwise the absolute difference.
int label_distance(Label a, Label b);

/// Mean label distance over all unordered pairs. Needs at least 2 labels.
double disagreement_score(std::span<const Label> labels);

struct DisagreementRecord {
  std::string posting_id;
  std::vector<Label> labels;  // sorted ascending
  double score = 0.0;
};

/// Postings of a round with >= 2 annotations, most disputed first
/// (ties by posting id).
std::vector<DisagreementRecord> rank_disagreements(const CorpusState& state,
                                                   const std::string& round_id);

/// Batch file for one annotator: `posting_id,text,label` with an empty
/// label column, rows in round order.
std::string export_batch(const CorpusState& state, const std::string& round_id,
                         const std::string& annotator_id);

/// Records one label. Re-submitting the same label leaves the stored record
/// untouched; a different label replaces it.
Annotation submit_annotation(Store& store, const std::string& posting_id,
                             const std::string& annotator_id, Label label,
                             std::int64_t submitted_at);

/// Imports a filled batch file. All rows are validated first; every problem
/// is reported with its row number (1-based, header excluded) and nothing is
/// written unless the whole file is valid.
std::vector<Annotation> import_batch(Store& store, std::string_view csv_text,
                                     const std::string& annotator_id,
                                     const std::string& round_id, std::int64_t submitted_at);

}  // namespace modlab

#pragma once

#include <istream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "modlab/corpus_store.hpp"

namespace modlab {

inline constexpr double kDefaultPostThreshold = 0.5;
inline constexpr double kDefaultForumThreshold = 0.10;

struct ForumRate {
  std::string forum_id;
  std::size_t n_postings = 0;
  std::size_t n_positive = 0;
  double rate = 0.0;
};

struct ForumReport {
  std::string forum_id;
  std::size_t n_postings = 0;
  double positive_rate = 0.0;
  bool flagged = false;
  double post_threshold = kDefaultPostThreshold;
  double forum_threshold = kDefaultForumThreshold;
};

/// Throws ValidationError on empty ids or a probability outside [0, 1].
void validate(const ScoreRecord& record);

std::vector<ScoreRecord> parse_scores_jsonl(std::istream& in);

/// Upserts scores by posting id. Returns the number of records written.
std::size_t ingest_scores(Store& store, std::span<const ScoreRecord> records);

/// Per forum: share of postings with p_positive >= post_threshold.
/// Forums in id order; forums without scores do not appear.
std::vector<ForumRate> forum_rates(const std::vector<ScoreRecord>& scores,
                                   double post_threshold = kDefaultPostThreshold);
std::vector<ForumRate> forum_rates(const CorpusState& state,
                                   double post_threshold = kDefaultPostThreshold);

/// flagged <=> rate >= forum_threshold; sorted by rate descending, ties by id.
std::vector<ForumReport> flag_forums(const std::vector<ForumRate>& rates,
                                     double forum_threshold = kDefaultForumThreshold,
                                     double post_threshold = kDefaultPostThreshold);

nlohmann::json to_json(const std::vector<ForumReport>& reports);
/// Columns forum_id, n, rate, flagged.
std::string flag_report_tsv(const std::vector<ForumReport>& reports);

}  // namespace modlab

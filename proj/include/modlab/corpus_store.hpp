#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <istream>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

#include "json.hpp"
#include "modlab/common.hpp"

namespace modlab {

inline constexpr int kStoreSchemaVersion = 1;

enum class SourceTag {
  ReportedSexismKeyword,      // S1
  ReportedOther,              // S2
  RandomSample,               // S3
  PreclassifiedFromReported,  // S4
  PreclassifiedHotForums,     // S5
};

std::string_view to_string(SourceTag tag);
SourceTag parse_source_tag(std::string_view text);

struct Posting {
  std::string id;
  std::string forum_id;
  std::string text;  // verbatim, never normalized
  SourceTag source = SourceTag::RandomSample;
  std::optional<double> preclass_prob;
};

/// Throws ValidationError naming the posting when an invariant is broken.
void validate(const Posting& posting);

enum class AnnotatorRole { Moderator, NlpExpert };

struct Annotator {
  std::string id;
  std::string display_name;
  AnnotatorRole role = AnnotatorRole::Moderator;
  bool active = true;
};

struct Annotation {
  std::string posting_id;
  std::string annotator_id;
  std::string round_id;
  Label label;
  std::int64_t submitted_at = 0;  // unix seconds

  bool operator==(const Annotation&) const = default;
};

enum class RoundKind { Calibration, Regular };
enum class RoundStatus { Open, Complete };

struct Round {
  std::string id;
  RoundKind kind = RoundKind::Regular;
  std::vector<std::string> posting_ids;    // ordered
  std::vector<std::string> annotator_ids;  // sorted, distinct
  RoundStatus status = RoundStatus::Open;

  bool is_assigned(std::string_view annotator_id) const;
};

/// Classifier output for one posting, consumed by forum flagging.
struct ScoreRecord {
  std::string posting_id;
  std::string forum_id;
  double p_positive = 0.0;
};

using AnnotationKey = std::pair<std::string, std::string>;  // (posting, annotator)

/// Complete in-memory content of a store. Plain value: copies are snapshots.
struct CorpusState {
  std::map<std::string, Posting> postings;
  std::map<std::string, Annotator> annotators;
  std::map<std::string, Round> rounds;
  std::map<std::string, std::string> round_of_posting;
  std::map<AnnotationKey, Annotation> annotations;
  std::map<std::string, ScoreRecord> scores;

  bool is_assigned(const std::string& posting_id) const;
  bool is_annotated(const std::string& posting_id) const;
  std::vector<Label> labels_for(const std::string& posting_id) const;
  const Round& round(const std::string& round_id) const;  // NotFoundError
};

enum Table : unsigned {
  kPostingsTable = 1U << 0,
  kAnnotatorsTable = 1U << 1,
  kRoundsTable = 1U << 2,
  kAnnotationsTable = 1U << 3,
  kScoresTable = 1U << 4,
  kAllTables = 0x1FU,
};

/// Single-writer, multi-reader store. With a directory, every write
/// rewrites the touched JSON-lines tables atomically (temp file + rename).
///
/// Layout: <dir>/meta.json, postings.jsonl, annotators.jsonl, rounds.jsonl,
/// annotations.jsonl, scores.jsonl.
class Store {
 public:
  /// In-memory store, nothing persisted.
  Store() = default;
  /// Opens (or initializes) a store directory. Throws IoError.
  explicit Store(std::filesystem::path directory);

  Store(const Store&) = delete;
  Store& operator=(const Store&) = delete;

  const std::optional<std::filesystem::path>& directory() const { return directory_; }

  /// Consistent copy of the current state.
  CorpusState snapshot() const;

  template <typename F>
  decltype(auto) read(F&& fn) const {
    std::shared_lock lock(mutex_);
    return std::forward<F>(fn)(static_cast<const CorpusState&>(state_));
  }

  /// Runs a mutation under the exclusive lock and persists the named
  /// tables. The mutation must validate before changing anything.
  template <typename F>
  decltype(auto) write(unsigned tables, F&& fn) {
    std::unique_lock lock(mutex_);
    if constexpr (std::is_void_v<decltype(fn(state_))>) {
      std::forward<F>(fn)(state_);
      persist(tables);
    } else {
      auto result = std::forward<F>(fn)(state_);
      persist(tables);
      return result;
    }
  }

 private:
  void load();
  void persist(unsigned tables) const;

  std::optional<std::filesystem::path> directory_;
  CorpusState state_;
  mutable std::shared_mutex mutex_;
};

// JSON mapping, shared by the store files, the API and the CLI.
void to_json(nlohmann::json& j, const Posting& p);
void from_json(const nlohmann::json& j, Posting& p);
void to_json(nlohmann::json& j, const Annotator& a);
void from_json(const nlohmann::json& j, Annotator& a);
void to_json(nlohmann::json& j, const Annotation& a);
void from_json(const nlohmann::json& j, Annotation& a);
void to_json(nlohmann::json& j, const Round& r);
void from_json(const nlohmann::json& j, Round& r);
void to_json(nlohmann::json& j, const ScoreRecord& s);
void from_json(const nlohmann::json& j, ScoreRecord& s);

std::string_view to_string(RoundKind kind);
RoundKind parse_round_kind(std::string_view text);

/// Parses a JSON-lines stream. Blank lines are skipped; a malformed record
/// throws ValidationError citing its line number.
std::vector<Posting> parse_postings_jsonl(std::istream& in);
std::vector<Annotator> parse_annotators_jsonl(std::istream& in);

/// Adds postings. Duplicate ids (against the store or within the batch)
/// are skipped when `dedupe`, otherwise the whole call is rejected.
/// Returns the number of postings added.
std::size_t ingest_postings(Store& store, std::span<const Posting> records, bool dedupe);

/// Inserts or replaces annotators by id. Returns the number written.
std::size_t upsert_annotators(Store& store, std::span<const Annotator> annotators);

/// Ids of postings neither assigned to a round nor annotated, sorted.
std::vector<std::string> unassigned_postings(const CorpusState& state);

/// Draws n distinct unassigned postings uniformly without replacement.
std::vector<std::string> sample_random(const CorpusState& state, std::size_t n,
                                       std::uint64_t seed);

enum class PreclassMode { TopPositive, NearBoundary };

inline constexpr double kDefaultBoundaryEpsilon = 0.1;

/// Selects up to n unassigned postings by pre-classifier probability.
/// TopPositive: largest probability first. NearBoundary: smallest
/// |p - 0.5| first, restricted to |p - 0.5| <= epsilon. Ties by id.
std::vector<std::string> sample_preclassified(const CorpusState& state, PreclassMode mode,
                                              std::size_t n,
                                              double epsilon = kDefaultBoundaryEpsilon);

/// Referential-integrity audit. Returns one message per violation.
std::vector<std::string> audit(const CorpusState& state);

}  // namespace modlab

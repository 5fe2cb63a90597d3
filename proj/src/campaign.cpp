#include "modlab/campaign.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <set>

#include "modlab/csv.hpp"

namespace modlab {
namespace {

std::string next_round_id(const CorpusState& state) {
  for (std::size_t n = state.rounds.size() + 1;; ++n) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "round-%04zu", n);
    if (!state.rounds.contains(buf)) return buf;
  }
}

void check_postings_free(const CorpusState& state, const std::vector<std::string>& posting_ids) {
  if (posting_ids.empty()) throw ValidationError("a round needs at least one posting");
  std::set<std::string> seen;
  for (const auto& id : posting_ids) {
    if (!state.postings.contains(id)) throw NotFoundError("unknown posting '" + id + "'");
    if (!seen.insert(id).second) {
      throw ValidationError("posting '" + id + "' listed twice in round");
    }
    if (auto it = state.round_of_posting.find(id); it != state.round_of_posting.end()) {
      throw ValidationError("posting '" + id + "' already belongs to " + it->second);
    }
  }
}

std::vector<std::string> checked_annotators(const CorpusState& state,
                                            const std::vector<std::string>& ids) {
  std::vector<std::string> sorted(ids);
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  for (const auto& id : sorted) {
    if (!state.annotators.contains(id)) throw NotFoundError("unknown annotator '" + id + "'");
  }
  return sorted;
}

Round insert_round(CorpusState& state, RoundKind kind, const std::vector<std::string>& posting_ids,
                   std::vector<std::string> annotators) {
  Round round;
  round.id = next_round_id(state);
  round.kind = kind;
  round.posting_ids = posting_ids;
  round.annotator_ids = std::move(annotators);
  for (const auto& pid : posting_ids) state.round_of_posting[pid] = round.id;
  state.rounds.emplace(round.id, round);
  return round;
}

// Labels tend to arrive in round order, so the scan runs backwards to hit
// a missing one early.
void refresh_status(CorpusState& state, const std::string& round_id) {
  auto& round = state.rounds.at(round_id);
  if (round.status == RoundStatus::Complete) return;  // annotations are never removed
  for (auto pid = round.posting_ids.rbegin(); pid != round.posting_ids.rend(); ++pid) {
    for (const auto& aid : round.annotator_ids) {
      if (!state.annotations.contains({*pid, aid})) {
        round.status = RoundStatus::Open;
        return;
      }
    }
  }
  round.status = RoundStatus::Complete;
}

// Resolves the round a posting is labeled in and checks the assignment.
const Round& assigned_round(const CorpusState& state, const std::string& posting_id,
                            const std::string& annotator_id) {
  if (!state.postings.contains(posting_id)) {
    throw NotFoundError("unknown posting '" + posting_id + "'");
  }
  if (!state.annotators.contains(annotator_id)) {
    throw NotFoundError("unknown annotator '" + annotator_id + "'");
  }
  auto it = state.round_of_posting.find(posting_id);
  if (it == state.round_of_posting.end()) {
    throw ValidationError("posting '" + posting_id + "' is not part of any round");
  }
  const Round& round = state.rounds.at(it->second);
  if (!round.is_assigned(annotator_id)) {
    throw ValidationError("annotator '" + annotator_id + "' is not assigned to " + round.id);
  }
  return round;
}

// Inserts or updates; returns the stored record.
Annotation upsert(CorpusState& state, const std::string& round_id, const std::string& posting_id,
                  const std::string& annotator_id, Label label, std::int64_t submitted_at) {
  AnnotationKey key{posting_id, annotator_id};
  auto it = state.annotations.find(key);
  if (it != state.annotations.end() && it->second.label == label) return it->second;
  Annotation a{posting_id, annotator_id, round_id, label, submitted_at};
  state.annotations.insert_or_assign(std::move(key), a);
  return a;
}

}  // namespace

std::vector<std::string> active_annotators(const CorpusState& state) {
  std::vector<std::string> out;
  for (const auto& [id, a] : state.annotators) {
    if (a.active) out.push_back(id);
  }
  return out;
}

Round create_calibration_round(Store& store, const std::vector<std::string>& posting_ids,
                               const std::vector<std::string>& annotators) {
  if (annotators.empty()) throw ValidationError("calibration round needs annotators");
  return store.write(kRoundsTable, [&](CorpusState& state) {
    check_postings_free(state, posting_ids);
    auto assigned = checked_annotators(state, annotators);
    return insert_round(state, RoundKind::Calibration, posting_ids, std::move(assigned));
  });
}

Round create_round(Store& store, const std::vector<std::string>& posting_ids,
                   const std::vector<std::string>& available, std::size_t k,
                   std::uint64_t seed) {
  if (k == 0) throw ValidationError("k must be at least 1");
  return store.write(kRoundsTable, [&](CorpusState& state) {
    check_postings_free(state, posting_ids);
    auto pool = checked_annotators(state, available);
    if (pool.size() < k) {
      throw ValidationError("need " + std::to_string(k) + " annotators, only " +
                            std::to_string(pool.size()) + " available");
    }
    Rng rng(seed);
    for (std::size_t i = 0; i < k; ++i) {
      std::swap(pool[i], pool[i + rng.uniform_index(pool.size() - i)]);
    }
    pool.resize(k);
    std::sort(pool.begin(), pool.end());
    return insert_round(state, RoundKind::Regular, posting_ids, std::move(pool));
  });
}

int label_distance(Label a, Label b) {
  if (a == b) return 0;
  if (a.value() == 0 || b.value() == 0) return 4;
  return std::abs(a.value() - b.value());
}

double disagreement_score(std::span<const Label> labels) {
  if (labels.size() < 2) {
    throw ValidationError("disagreement score needs at least 2 labels");
  }
  long total = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t j = i + 1; j < labels.size(); ++j) total += label_distance(labels[i], labels[j]);
  }
  const double pairs = static_cast<double>(labels.size() * (labels.size() - 1) / 2);
  return static_cast<double>(total) / pairs;
}

std::vector<DisagreementRecord> rank_disagreements(const CorpusState& state,
                                                   const std::string& round_id) {
  const Round& round = state.round(round_id);
  std::vector<DisagreementRecord> out;
  for (const auto& pid : round.posting_ids) {
    auto labels = state.labels_for(pid);
    if (labels.size() < 2) continue;
    std::sort(labels.begin(), labels.end());
    const double score = disagreement_score(labels);
    out.push_back({pid, std::move(labels), score});
  }
  std::sort(out.begin(), out.end(), [](const DisagreementRecord& a, const DisagreementRecord& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.posting_id < b.posting_id;
  });
  return out;
}

std::string export_batch(const CorpusState& state, const std::string& round_id,
                         const std::string& annotator_id) {
  const Round& round = state.round(round_id);
  if (!round.is_assigned(annotator_id)) {
    throw ValidationError("annotator '" + annotator_id + "' is not assigned to " + round_id);
  }
  std::string out = csv::format_row({"posting_id", "text", "label"});
  for (const auto& pid : round.posting_ids) {
    out += csv::format_row({pid, state.postings.at(pid).text, ""});
  }
  return out;
}

Annotation submit_annotation(Store& store, const std::string& posting_id,
                             const std::string& annotator_id, Label label,
                             std::int64_t submitted_at) {
  return store.write(kAnnotationsTable | kRoundsTable, [&](CorpusState& state) {
    const Round& round = assigned_round(state, posting_id, annotator_id);
    const std::string round_id = round.id;
    auto stored = upsert(state, round_id, posting_id, annotator_id, label, submitted_at);
    refresh_status(state, round_id);
    return stored;
  });
}

std::vector<Annotation> import_batch(Store& store, std::string_view csv_text,
                                     const std::string& annotator_id,
                                     const std::string& round_id, std::int64_t submitted_at) {
  const auto rows = csv::parse(csv_text);
  if (rows.empty() || rows.front().fields != std::vector<std::string>{"posting_id", "text", "label"}) {
    throw ValidationError("batch file must start with header posting_id,text,label");
  }

  return store.write(kAnnotationsTable | kRoundsTable, [&](CorpusState& state) {
    const Round& round = state.round(round_id);
    if (!round.is_assigned(annotator_id)) {
      throw ValidationError("annotator '" + annotator_id + "' is not assigned to " + round_id);
    }
    const std::set<std::string> in_round(round.posting_ids.begin(), round.posting_ids.end());

    std::vector<std::pair<std::string, Label>> parsed;
    std::string problems;
    for (std::size_t r = 1; r < rows.size(); ++r) {
      const auto& fields = rows[r].fields;
      const std::string where = "row " + std::to_string(r) + ": ";
      if (fields.size() == 1 && fields[0].empty()) continue;  // trailing blank line
      if (fields.size() != 3) {
        problems += where + "expected 3 columns, got " + std::to_string(fields.size()) + "\n";
        continue;
      }
      const auto& pid = fields[0];
      const auto& cell = fields[2];
      if (!in_round.contains(pid)) {
        problems += where + "unknown posting id '" + pid + "' for " + round_id + "\n";
        continue;
      }
      if (cell.empty()) {
        problems += where + "missing label for posting '" + pid + "'\n";
        continue;
      }
      int value = -1;
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
      if (ec != std::errc() || ptr != cell.data() + cell.size() || value < 0 ||
          value >= kNumLabels) {
        problems += where + "label '" + cell + "' outside valid range 0..4\n";
        continue;
      }
      parsed.emplace_back(pid, Label(value));
    }
    if (!problems.empty()) {
      problems.pop_back();
      throw ValidationError("batch import rejected:\n" + problems);
    }

    std::vector<Annotation> out;
    out.reserve(parsed.size());
    for (const auto& [pid, label] : parsed) {
      out.push_back(upsert(state, round_id, pid, annotator_id, label, submitted_at));
    }
    refresh_status(state, round_id);
    return out;
  });
}

}  // namespace modlab

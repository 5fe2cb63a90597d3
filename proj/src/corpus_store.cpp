#include "modlab/corpus_store.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <system_error>

namespace modlab {
namespace {

constexpr std::string_view kMetaFile = "meta.json";
constexpr std::string_view kPostingsFile = "postings.jsonl";
constexpr std::string_view kAnnotatorsFile = "annotators.jsonl";
constexpr std::string_view kRoundsFile = "rounds.jsonl";
constexpr std::string_view kAnnotationsFile = "annotations.jsonl";
constexpr std::string_view kScoresFile = "scores.jsonl";

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(),
                     [](unsigned char c) { return std::isspace(c) != 0; });
}

std::string_view to_string(AnnotatorRole role) {
  return role == AnnotatorRole::Moderator ? "moderator" : "nlp_expert";
}

AnnotatorRole parse_annotator_role(std::string_view text) {
  if (text == "moderator") return AnnotatorRole::Moderator;
  if (text == "nlp_expert") return AnnotatorRole::NlpExpert;
  throw ValidationError("unknown annotator role '" + std::string(text) + "'");
}

std::string_view to_string(RoundStatus status) {
  return status == RoundStatus::Open ? "open" : "complete";
}

RoundStatus parse_round_status(std::string_view text) {
  if (text == "open") return RoundStatus::Open;
  if (text == "complete") return RoundStatus::Complete;
  throw ValidationError("unknown round status '" + std::string(text) + "'");
}

template <typename T>
std::vector<T> parse_jsonl(std::istream& in, std::string_view what) {
  std::vector<T> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    try {
      out.push_back(nlohmann::json::parse(line).get<T>());
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(std::string(what) + " line " + std::to_string(line_no) +
                            ": malformed record: " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError(std::string(what) + " line " + std::to_string(line_no) +
                            ": " + e.what());
    }
  }
  if (in.bad()) throw IoError("read failure in " + std::string(what));
  return out;
}

template <typename T>
std::vector<T> read_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) return {};
  return parse_jsonl<T>(in, path.filename().string());
}

void write_atomically(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot replace " + path.string() + ": " + ec.message());
}

template <typename Map>
std::string dump_table(const Map& map) {
  std::string out;
  for (const auto& [key, value] : map) {
    out += nlohmann::json(value).dump();
    out.push_back('\n');
  }
  return out;
}

}  // namespace

std::string_view to_string(SourceTag tag) {
  switch (tag) {
    case SourceTag::ReportedSexismKeyword: return "S1_reported_sexism_keyword";
    case SourceTag::ReportedOther: return "S2_reported_other";
    case SourceTag::RandomSample: return "S3_random_sample";
    case SourceTag::PreclassifiedFromReported: return "S4_preclassified_from_S2";
    case SourceTag::PreclassifiedHotForums: return "S5_preclassified_hot_forums";
  }
  return "unknown";
}

SourceTag parse_source_tag(std::string_view text) {
  for (auto tag : {SourceTag::ReportedSexismKeyword, SourceTag::ReportedOther,
                   SourceTag::RandomSample, SourceTag::PreclassifiedFromReported,
                   SourceTag::PreclassifiedHotForums}) {
    if (to_string(tag) == text) return tag;
  }
  throw ValidationError("unknown source_tag '" + std::string(text) + "'");
}

std::string_view to_string(RoundKind kind) {
  return kind == RoundKind::Calibration ? "calibration" : "regular";
}

RoundKind parse_round_kind(std::string_view text) {
  if (text == "calibration") return RoundKind::Calibration;
  if (text == "regular") return RoundKind::Regular;
  throw ValidationError("unknown round kind '" + std::string(text) + "'");
}

void validate(const Posting& p) {
  if (p.id.empty()) throw ValidationError("posting with empty id");
  if (p.forum_id.empty()) throw ValidationError("posting '" + p.id + "': empty forum_id");
  if (is_blank(p.text)) throw ValidationError("posting '" + p.id + "': empty text");
  if (p.preclass_prob) {
    const double prob = *p.preclass_prob;
    if (!std::isfinite(prob) || prob < 0.0 || prob > 1.0) {
      std::ostringstream os;
      os << "posting '" << p.id << "': preclass_prob " << prob << " outside [0,1]";
      throw ValidationError(os.str());
    }
  }
}

bool Round::is_assigned(std::string_view annotator_id) const {
  return std::binary_search(annotator_ids.begin(), annotator_ids.end(), annotator_id);
}

bool CorpusState::is_assigned(const std::string& posting_id) const {
  return round_of_posting.contains(posting_id);
}

bool CorpusState::is_annotated(const std::string& posting_id) const {
  auto it = annotations.lower_bound({posting_id, std::string()});
  return it != annotations.end() && it->first.first == posting_id;
}

std::vector<Label> CorpusState::labels_for(const std::string& posting_id) const {
  std::vector<Label> out;
  for (auto it = annotations.lower_bound({posting_id, std::string()});
       it != annotations.end() && it->first.first == posting_id; ++it) {
    out.push_back(it->second.label);
  }
  return out;
}

const Round& CorpusState::round(const std::string& round_id) const {
  auto it = rounds.find(round_id);
  if (it == rounds.end()) throw NotFoundError("unknown round '" + round_id + "'");
  return it->second;
}

void to_json(nlohmann::json& j, const Posting& p) {
  j = nlohmann::json{{"id", p.id},
                     {"forum_id", p.forum_id},
                     {"text", p.text},
                     {"source_tag", to_string(p.source)}};
  if (p.preclass_prob) j["preclass_prob"] = *p.preclass_prob;
}

void from_json(const nlohmann::json& j, Posting& p) {
  p.id = j.at("id").get<std::string>();
  p.forum_id = j.at("forum_id").get<std::string>();
  p.text = j.at("text").get<std::string>();
  p.source = parse_source_tag(j.at("source_tag").get<std::string>());
  p.preclass_prob.reset();
  if (auto it = j.find("preclass_prob"); it != j.end() && !it->is_null()) {
    p.preclass_prob = it->get<double>();
  }
  validate(p);
}

void to_json(nlohmann::json& j, const Annotator& a) {
  j = nlohmann::json{{"id", a.id},
                     {"display_name", a.display_name},
                     {"role", to_string(a.role)},
                     {"active", a.active}};
}

void from_json(const nlohmann::json& j, Annotator& a) {
  a.id = j.at("id").get<std::string>();
  if (a.id.empty()) throw ValidationError("annotator with empty id");
  a.display_name = j.value("display_name", a.id);
  a.role = parse_annotator_role(j.value("role", std::string("moderator")));
  a.active = j.value("active", true);
}

void to_json(nlohmann::json& j, const Annotation& a) {
  j = nlohmann::json{{"posting_id", a.posting_id},
                     {"annotator_id", a.annotator_id},
                     {"round_id", a.round_id},
                     {"label", a.label.value()},
                     {"submitted_at", a.submitted_at}};
}

void from_json(const nlohmann::json& j, Annotation& a) {
  a.posting_id = j.at("posting_id").get<std::string>();
  a.annotator_id = j.at("annotator_id").get<std::string>();
  a.round_id = j.at("round_id").get<std::string>();
  a.label = Label(j.at("label").get<int>());
  a.submitted_at = j.value("submitted_at", std::int64_t{0});
}

void to_json(nlohmann::json& j, const Round& r) {
  j = nlohmann::json{{"id", r.id},
                     {"kind", to_string(r.kind)},
                     {"posting_ids", r.posting_ids},
                     {"annotator_ids", r.annotator_ids},
                     {"status", to_string(r.status)}};
}

void from_json(const nlohmann::json& j, Round& r) {
  r.id = j.at("id").get<std::string>();
  r.kind = parse_round_kind(j.at("kind").get<std::string>());
  r.posting_ids = j.at("posting_ids").get<std::vector<std::string>>();
  r.annotator_ids = j.at("annotator_ids").get<std::vector<std::string>>();
  std::sort(r.annotator_ids.begin(), r.annotator_ids.end());
  r.status = parse_round_status(j.value("status", std::string("open")));
}

void to_json(nlohmann::json& j, const ScoreRecord& s) {
  j = nlohmann::json{
      {"posting_id", s.posting_id}, {"forum_id", s.forum_id}, {"p_positive", s.p_positive}};
}

void from_json(const nlohmann::json& j, ScoreRecord& s) {
  s.posting_id = j.at("posting_id").get<std::string>();
  s.forum_id = j.at("forum_id").get<std::string>();
  s.p_positive = j.at("p_positive").get<double>();
}

// ---------------------------------------------------------------------------
// Store

Store::Store(std::filesystem::path directory) : directory_(std::move(directory)) {
  std::error_code ec;
  std::filesystem::create_directories(*directory_, ec);
  if (ec) throw IoError("cannot create store directory " + directory_->string());
  load();
}

CorpusState Store::snapshot() const {
  std::shared_lock lock(mutex_);
  return state_;
}

void Store::load() {
  const auto& dir = *directory_;
  const auto meta_path = dir / kMetaFile;
  if (std::filesystem::exists(meta_path)) {
    std::ifstream in(meta_path);
    nlohmann::json meta;
    try {
      meta = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw IoError("corrupt " + meta_path.string() + ": " + e.what());
    }
    const int version = meta.value("schema_version", 0);
    if (version < 1 || version > kStoreSchemaVersion) {
      throw IoError("unsupported store schema_version " + std::to_string(version));
    }
  } else {
    write_atomically(meta_path,
                     nlohmann::json{{"schema_version", kStoreSchemaVersion}}.dump() + "\n");
  }

  try {
    for (auto& p : read_table<Posting>(dir / kPostingsFile)) {
      auto id = p.id;
      state_.postings.emplace(std::move(id), std::move(p));
    }
    for (auto& a : read_table<Annotator>(dir / kAnnotatorsFile)) {
      auto id = a.id;
      state_.annotators.emplace(std::move(id), std::move(a));
    }
    for (auto& r : read_table<Round>(dir / kRoundsFile)) {
      for (const auto& pid : r.posting_ids) state_.round_of_posting[pid] = r.id;
      auto id = r.id;
      state_.rounds.emplace(std::move(id), std::move(r));
    }
    for (auto& a : read_table<Annotation>(dir / kAnnotationsFile)) {
      AnnotationKey key{a.posting_id, a.annotator_id};
      state_.annotations.emplace(std::move(key), std::move(a));
    }
    for (auto& s : read_table<ScoreRecord>(dir / kScoresFile)) {
      auto id = s.posting_id;
      state_.scores.emplace(std::move(id), std::move(s));
    }
  } catch (const ValidationError& e) {
    throw IoError(std::string("corrupt store table: ") + e.what());
  }
}

void Store::persist(unsigned tables) const {
  if (!directory_) return;
  const auto& dir = *directory_;
  if (tables & kPostingsTable) write_atomically(dir / kPostingsFile, dump_table(state_.postings));
  if (tables & kAnnotatorsTable) {
    write_atomically(dir / kAnnotatorsFile, dump_table(state_.annotators));
  }
  if (tables & kRoundsTable) write_atomically(dir / kRoundsFile, dump_table(state_.rounds));
  if (tables & kAnnotationsTable) {
    write_atomically(dir / kAnnotationsFile, dump_table(state_.annotations));
  }
  if (tables & kScoresTable) write_atomically(dir / kScoresFile, dump_table(state_.scores));
}

// ---------------------------------------------------------------------------
// Operations

std::vector<Posting> parse_postings_jsonl(std::istream& in) {
  return parse_jsonl<Posting>(in, "postings");
}

std::vector<Annotator> parse_annotators_jsonl(std::istream& in) {
  return parse_jsonl<Annotator>(in, "annotators");
}

std::size_t ingest_postings(Store& store, std::span<const Posting> records, bool dedupe) {
  for (const auto& p : records) validate(p);
  return store.write(kPostingsTable, [&](CorpusState& state) {
    std::set<std::string> batch_ids;
    std::vector<const Posting*> accepted;
    for (const auto& p : records) {
      const bool seen = state.postings.contains(p.id) || batch_ids.contains(p.id);
      if (seen) {
        if (dedupe) continue;
        throw ValidationError("duplicate posting id '" + p.id + "'");
      }
      batch_ids.insert(p.id);
      accepted.push_back(&p);
    }
    for (const Posting* p : accepted) state.postings.emplace(p->id, *p);
    return accepted.size();
  });
}

std::size_t upsert_annotators(Store& store, std::span<const Annotator> annotators) {
  for (const auto& a : annotators) {
    if (a.id.empty()) throw ValidationError("annotator with empty id");
  }
  return store.write(kAnnotatorsTable, [&](CorpusState& state) {
    for (const auto& a : annotators) state.annotators[a.id] = a;
    return annotators.size();
  });
}

std::vector<std::string> unassigned_postings(const CorpusState& state) {
  std::vector<std::string> out;
  for (const auto& [id, posting] : state.postings) {
    if (!state.is_assigned(id) && !state.is_annotated(id)) out.push_back(id);
  }
  return out;
}

std::vector<std::string> sample_random(const CorpusState& state, std::size_t n,
                                       std::uint64_t seed) {
  auto pool = unassigned_postings(state);
  if (n > pool.size()) {
    throw ValidationError("cannot sample " + std::to_string(n) + " postings: only " +
                          std::to_string(pool.size()) + " unassigned");
  }
  // Partial Fisher-Yates over the id-sorted pool.
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    std::swap(pool[i], pool[i + rng.uniform_index(pool.size() - i)]);
  }
  pool.resize(n);
  return pool;
}

std::vector<std::string> sample_preclassified(const CorpusState& state, PreclassMode mode,
                                              std::size_t n, double epsilon) {
  struct Candidate {
    double key;
    const std::string* id;
  };
  std::vector<Candidate> candidates;
  bool any_probability = false;
  for (const auto& id : unassigned_postings(state)) {
    const auto& p = state.postings.at(id);
    if (!p.preclass_prob) continue;
    any_probability = true;
    const double prob = *p.preclass_prob;
    if (mode == PreclassMode::TopPositive) {
      candidates.push_back({-prob, &p.id});
    } else {
      const double distance = std::abs(prob - 0.5);
      if (distance <= epsilon) candidates.push_back({distance, &p.id});
    }
  }
  if (!any_probability) {
    throw ValidationError("no unassigned postings carry a preclass_prob");
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.key != b.key) return a.key < b.key;
    return *a.id < *b.id;
  });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < std::min(n, candidates.size()); ++i) out.push_back(*candidates[i].id);
  return out;
}

std::vector<std::string> audit(const CorpusState& state) {
  std::vector<std::string> problems;
  for (const auto& [key, a] : state.annotations) {
    const std::string where = "annotation (" + key.first + ", " + key.second + ")";
    if (!state.postings.contains(a.posting_id)) {
      problems.push_back(where + ": unknown posting '" + a.posting_id + "'");
    }
    if (!state.annotators.contains(a.annotator_id)) {
      problems.push_back(where + ": unknown annotator '" + a.annotator_id + "'");
    }
    if (!state.rounds.contains(a.round_id)) {
      problems.push_back(where + ": unknown round '" + a.round_id + "'");
    }
    if (key.first != a.posting_id || key.second != a.annotator_id) {
      problems.push_back(where + ": key does not match record");
    }
  }
  for (const auto& [id, round] : state.rounds) {
    for (const auto& pid : round.posting_ids) {
      if (!state.postings.contains(pid)) {
        problems.push_back("round '" + id + "': unknown posting '" + pid + "'");
      }
    }
    for (const auto& aid : round.annotator_ids) {
      if (!state.annotators.contains(aid)) {
        problems.push_back("round '" + id + "': unknown annotator '" + aid + "'");
      }
    }
  }
  return problems;
}

}  // namespace modlab

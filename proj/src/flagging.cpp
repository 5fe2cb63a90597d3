#include "modlab/flagging.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

namespace modlab {

void validate(const ScoreRecord& record) {
  if (record.posting_id.empty() || record.forum_id.empty()) {
    throw ValidationError("score record with empty posting_id or forum_id");
  }
  const double p = record.p_positive;
  if (!std::isfinite(p) || p < 0.0 || p > 1.0) {
    throw ValidationError("score for posting '" + record.posting_id + "': p_positive " +
                          std::to_string(p) + " outside [0,1]");
  }
}

std::vector<ScoreRecord> parse_scores_jsonl(std::istream& in) {
  std::vector<ScoreRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(nlohmann::json::parse(line).get<ScoreRecord>());
      validate(out.back());
    } catch (const std::exception& e) {
      throw ValidationError("scores line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::size_t ingest_scores(Store& store, std::span<const ScoreRecord> records) {
  for (const auto& r : records) validate(r);
  return store.write(kScoresTable, [&](CorpusState& state) {
    for (const auto& r : records) state.scores[r.posting_id] = r;
    return records.size();
  });
}

std::vector<ForumRate> forum_rates(const std::vector<ScoreRecord>& scores, double post_threshold) {
  std::map<std::string, ForumRate> by_forum;
  for (const auto& s : scores) {
    auto& r = by_forum[s.forum_id];
    r.forum_id = s.forum_id;
    ++r.n_postings;
    if (s.p_positive >= post_threshold) ++r.n_positive;
  }
  std::vector<ForumRate> out;
  out.reserve(by_forum.size());
  for (auto& [id, r] : by_forum) {
    r.rate = static_cast<double>(r.n_positive) / static_cast<double>(r.n_postings);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<ForumRate> forum_rates(const CorpusState& state, double post_threshold) {
  std::vector<ScoreRecord> scores;
  scores.reserve(state.scores.size());
  for (const auto& [id, s] : state.scores) scores.push_back(s);
  return forum_rates(scores, post_threshold);
}

std::vector<ForumReport> flag_forums(const std::vector<ForumRate>& rates, double forum_threshold,
                                     double post_threshold) {
  std::vector<ForumReport> out;
  out.reserve(rates.size());
  for (const auto& r : rates) {
    out.push_back({r.forum_id, r.n_postings, r.rate, r.rate >= forum_threshold, post_threshold,
                   forum_threshold});
  }
  std::sort(out.begin(), out.end(), [](const ForumReport& a, const ForumReport& b) {
    if (a.positive_rate != b.positive_rate) return a.positive_rate > b.positive_rate;
    return a.forum_id < b.forum_id;
  });
  return out;
}

nlohmann::json to_json(const std::vector<ForumReport>& reports) {
  nlohmann::json forums = nlohmann::json::array();
  for (const auto& r : reports) {
    forums.push_back({{"forum_id", r.forum_id},
                      {"n", r.n_postings},
                      {"rate", r.positive_rate},
                      {"flagged", r.flagged}});
  }
  const double tau_post = reports.empty() ? kDefaultPostThreshold : reports.front().post_threshold;
  const double tau_forum =
      reports.empty() ? kDefaultForumThreshold : reports.front().forum_threshold;
  return nlohmann::json{
      {"tau_post", tau_post}, {"tau_forum", tau_forum}, {"forums", std::move(forums)}};
}

std::string flag_report_tsv(const std::vector<ForumReport>& reports) {
  std::string out = "forum_id\tn\trate\tflagged\n";
  for (const auto& r : reports) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "\t%zu\t%.4f\t%s\n", r.n_postings, r.positive_rate,
                  r.flagged ? "true" : "false");
    out += r.forum_id + buf;
  }
  return out;
}

}  // namespace modlab

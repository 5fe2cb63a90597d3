#include <sstream>

#include "doctest.h"
#include "modlab/flagging.hpp"
#include "oracles.hpp"

using namespace modlab;

TEST_CASE("score validation") {
  CHECK_NOTHROW(validate(ScoreRecord{"p", "f", 0.0}));
  CHECK_NOTHROW(validate(ScoreRecord{"p", "f", 1.0}));
  CHECK_THROWS_AS(validate(ScoreRecord{"p", "f", 1.01}), ValidationError);
  CHECK_THROWS_AS(validate(ScoreRecord{"p", "", 0.5}), ValidationError);
  CHECK_THROWS_AS(validate(ScoreRecord{"", "f", 0.5}), ValidationError);
}

TEST_CASE("forum rates count scores at or above the post threshold") {
  const std::vector<ScoreRecord> scores = {
      {"a", "f1", 0.5}, {"b", "f1", 0.49}, {"c", "f1", 0.9}, {"d", "f2", 0.1}};
  const auto rates = forum_rates(scores);
  REQUIRE(rates.size() == 2);
  CHECK(rates[0].forum_id == "f1");
  CHECK(rates[0].n_postings == 3);
  CHECK(rates[0].n_positive == 2);
  CHECK(rates[0].rate == doctest::Approx(2.0 / 3.0));
  CHECK(rates[1].rate == 0.0);
  CHECK(forum_rates(scores, 0.95)[0].n_positive == 0);
}

TEST_CASE("reference forum rates flag exactly the first three") {
  const auto reports = flag_forums(forum_rates(fixtures::reference_forum_scores()), 0.10);
  REQUIRE(reports.size() == 6);
  CHECK(reports[0].forum_id == "forum-c");
  CHECK(reports[0].positive_rate == 0.27);
  CHECK(reports[1].forum_id == "forum-a");
  CHECK(reports[2].forum_id == "forum-b");
  for (int i = 0; i < 6; ++i) CHECK(reports[i].flagged == (i < 3));
}

TEST_CASE("forum threshold boundaries") {
  const auto rates = forum_rates(fixtures::reference_forum_scores());
  auto count_flagged = [&](double tau) {
    int n = 0;
    for (const auto& r : flag_forums(rates, tau)) n += r.flagged;
    return n;
  };
  CHECK(count_flagged(0.0) == 6);
  CHECK(count_flagged(0.05) == 4);
  CHECK(count_flagged(0.17) == 3);  // rate equal to threshold is flagged
  CHECK(count_flagged(0.30) == 0);
  CHECK(count_flagged(1.0) == 0);
}

TEST_CASE("flag ordering ties by forum id") {
  const std::vector<ForumRate> rates = {{"z", 10, 2, 0.2}, {"a", 10, 2, 0.2}, {"m", 10, 5, 0.5}};
  const auto reports = flag_forums(rates, 0.3);
  CHECK(reports[0].forum_id == "m");
  CHECK(reports[1].forum_id == "a");
  CHECK(reports[2].forum_id == "z");
  CHECK(reports[0].flagged);
  CHECK_FALSE(reports[1].flagged);
}

TEST_CASE("scores are ingested by upsert and feed the store rates") {
  Store store;
  const std::vector<ScoreRecord> first = {{"p1", "f", 0.9}, {"p2", "f", 0.2}};
  CHECK(ingest_scores(store, first) == 2);
  const std::vector<ScoreRecord> update = {{"p2", "f", 0.8}};
  ingest_scores(store, update);
  const auto rates = forum_rates(store.snapshot());
  REQUIRE(rates.size() == 1);
  CHECK(rates[0].n_postings == 2);
  CHECK(rates[0].rate == 1.0);
  const std::vector<ScoreRecord> bad = {{"p3", "f", 0.1}, {"p4", "f", -0.1}};
  CHECK_THROWS_AS(ingest_scores(store, bad), ValidationError);
  CHECK(store.snapshot().scores.size() == 2);
}

TEST_CASE("scores JSON lines parsing") {
  std::istringstream in("{\"posting_id\":\"a\",\"forum_id\":\"f\",\"p_positive\":0.3}\n"
                        "{\"posting_id\":\"b\",\"forum_id\":\"f\",\"p_positive\":7}\n");
  try {
    parse_scores_jsonl(in);
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("report serialization") {
  const auto reports = flag_forums(forum_rates(fixtures::reference_forum_scores()), 0.10);
  const auto j = to_json(reports);
  CHECK(j["tau_forum"] == 0.10);
  CHECK(j["tau_post"] == 0.5);
  CHECK(j["forums"].size() == 6);
  CHECK(j["forums"][0]["forum_id"] == "forum-c");
  CHECK(j["forums"][0]["n"] == 100);
  CHECK(j["forums"][0]["flagged"] == true);
  const auto tsv = flag_report_tsv(reports);
  CHECK(tsv.rfind("forum_id\tn\trate\tflagged\n", 0) == 0);
  CHECK(tsv.find("forum-c\t100\t") != std::string::npos);
}

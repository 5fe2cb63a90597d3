#include <fstream>
#include <random>
#include <set>

#include "doctest.h"
#include "modlab/campaign.hpp"
#include "modlab/resolve.hpp"
#include "oracles.hpp"

using namespace modlab;

namespace {

std::vector<Label> labels(std::initializer_list<int> values) {
  std::vector<Label> out;
  for (int v : values) out.emplace_back(v);
  return out;
}

std::vector<GoldRecord> random_records(std::mt19937_64& gen, std::size_t n) {
  std::vector<GoldRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    const int l = static_cast<int>(gen() % 5);
    out.push_back({fixtures::posting_id(i), Label(l), binarize(l), Strategy::MostFrequent});
  }
  return out;
}

}  // namespace

TEST_CASE("most frequent breaks ties toward the larger label") {
  CHECK(resolve_most_frequent(labels({0, 0, 3})).value() == 0);
  CHECK(resolve_most_frequent(labels({0, 3})).value() == 3);
  CHECK(resolve_most_frequent(labels({1, 1, 2, 2, 0})).value() == 2);
  CHECK(resolve_most_frequent(labels({4})).value() == 4);
  CHECK_THROWS_AS(resolve_most_frequent({}), ValidationError);
  CHECK_THROWS_AS(resolve_max({}), ValidationError);
}

TEST_CASE("resolvers match exhaustive enumeration") {
  for (const auto& values : oracle::multisets(4)) {
    const auto ls = to_labels(values);
    CHECK(resolve_most_frequent(ls).value() == oracle::naive_most_frequent(values));
    CHECK(resolve_max(ls).value() == oracle::naive_max(values));
    // Order of the multiset does not matter.
    auto reversed = ls;
    std::reverse(reversed.begin(), reversed.end());
    CHECK(resolve_most_frequent(reversed) == resolve_most_frequent(ls));
  }
}

TEST_CASE("binary targets") {
  // Majority of binarized labels, tie counts as positive.
  CHECK(binary_target(labels({0, 0, 1}), Strategy::MostFrequent) == 0);
  CHECK(binary_target(labels({0, 1, 2}), Strategy::MostFrequent) == 1);
  CHECK(binary_target(labels({0, 3}), Strategy::MostFrequent) == 1);
  // Resolved-label rule: {0,0,1,2}: most frequent is 0.
  CHECK(binary_target(labels({0, 0, 1, 2}), Strategy::MostFrequent) == 1);
  CHECK(binary_target(labels({0, 0, 1, 2}), Strategy::MostFrequent, BinaryRule::BinarizeResolved) == 0);
  // {0, 1, 2}: majority says positive, the resolved label is 2 as well.
  CHECK(binary_target(labels({0, 1, 2}), Strategy::MostFrequent, BinaryRule::BinarizeResolved) == 1);
  // Max: positive whenever anyone saw misogyny.
  CHECK(binary_target(labels({0, 0, 0, 1}), Strategy::Max) == 1);
  CHECK(binary_target(labels({0, 0}), Strategy::Max) == 0);
}

TEST_CASE("strategy names") {
  CHECK(parse_strategy("most_frequent") == Strategy::MostFrequent);
  CHECK(parse_strategy("max") == Strategy::Max);
  CHECK(to_string(Strategy::Max) == "max");
  CHECK_THROWS_AS(parse_strategy("median"), ValidationError);
}

TEST_CASE("gold records cover annotated postings in id order") {
  Store store;
  fixtures::seed_store(store, 3, 3);
  create_calibration_round(store, {fixtures::posting_id(0), fixtures::posting_id(1), fixtures::posting_id(2)},
                           {"ann0", "ann1", "ann2"});
  submit_annotation(store, fixtures::posting_id(1), "ann0", Label(0), 1);
  submit_annotation(store, fixtures::posting_id(1), "ann1", Label(2), 1);
  submit_annotation(store, fixtures::posting_id(1), "ann2", Label(0), 1);
  submit_annotation(store, fixtures::posting_id(0), "ann0", Label(4), 1);
  const auto mf = resolve_gold(store.snapshot(), Strategy::MostFrequent);
  REQUIRE(mf.size() == 2);
  CHECK(mf[0] == GoldRecord{fixtures::posting_id(0), Label(4), 1, Strategy::MostFrequent});
  CHECK(mf[1] == GoldRecord{fixtures::posting_id(1), Label(0), 0, Strategy::MostFrequent});
  const auto mx = resolve_gold(store.snapshot(), Strategy::Max);
  CHECK(mx[1] == GoldRecord{fixtures::posting_id(1), Label(2), 1, Strategy::Max});
}

TEST_CASE("stratified folds partition and balance every class") {
  std::mt19937_64 gen(10);
  for (int trial = 0; trial < 20; ++trial) {
    const auto records = random_records(gen, 50 + gen() % 300);
    for (auto target : {StratifyOn::Label, StratifyOn::Binary}) {
      const auto plan = stratified_folds(records, 5, 0.1, trial, target);
      std::map<int, std::vector<std::size_t>> per_fold;
      for (const auto& r : records) {
        const int cls = target == StratifyOn::Label ? r.gold_label.value() : r.gold_binary;
        per_fold[cls].resize(5);
        ++per_fold[cls][plan.assignment.at(r.posting_id)];
      }
      for (const auto& [cls, counts] : per_fold) {
        const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
        CHECK(*hi - *lo <= 1);
      }
      CHECK(plan.assignment.size() == records.size());
    }
  }
}

TEST_CASE("fold totals stay balanced across classes") {
  std::mt19937_64 gen(11);
  const auto records = random_records(gen, 103);
  const auto plan = stratified_folds(records, 5);
  std::vector<std::size_t> sizes(5);
  for (const auto& [id, f] : plan.assignment) ++sizes[f];
  const auto [lo, hi] = std::minmax_element(sizes.begin(), sizes.end());
  CHECK(*hi - *lo <= 1);
}

TEST_CASE("dev split is a tenth of each class of the training part") {
  std::mt19937_64 gen(12);
  const auto records = random_records(gen, 400);
  const auto plan = stratified_folds(records, 5, 0.1, 3);
  std::map<std::string, int> cls;
  for (const auto& r : records) cls[r.posting_id] = r.gold_label.value();
  for (std::size_t f = 0; f < 5; ++f) {
    std::map<int, int> dev, train;
    for (const auto& id : plan.dev_ids_of(f)) {
      ++dev[cls[id]];
      CHECK(plan.assignment.at(id) != f);
    }
    for (const auto& id : plan.train_ids(f)) ++train[cls[id]];
    for (const auto& [c, n] : train) {
      CHECK(std::abs(dev[c] - std::lround(0.1 * (n + dev[c]))) == 0);
    }
  }
}

TEST_CASE("folds are deterministic per seed and change with it") {
  std::mt19937_64 gen(13);
  const auto records = random_records(gen, 200);
  const auto a = stratified_folds(records, 5, 0.1, 42);
  const auto b = stratified_folds(records, 5, 0.1, 42);
  const auto c = stratified_folds(records, 5, 0.1, 43);
  CHECK(a.assignment == b.assignment);
  CHECK(a.dev_ids == b.dev_ids);
  CHECK(a.assignment != c.assignment);
  // Input order does not matter.
  auto shuffled = records;
  std::shuffle(shuffled.begin(), shuffled.end(), gen);
  CHECK(stratified_folds(shuffled, 5, 0.1, 42).assignment == a.assignment);
}

TEST_CASE("fold edge cases") {
  std::vector<GoldRecord> tiny = {{"a", Label(0), 0, {}}, {"b", Label(0), 0, {}},
                                  {"c", Label(4), 1, {}}};
  const auto plan = stratified_folds(tiny, 2);
  CHECK_FALSE(plan.warning.empty());
  CHECK_THROWS_AS(stratified_folds(tiny, 1), ValidationError);
  CHECK_THROWS_AS(stratified_folds({}, 5), ValidationError);
  CHECK_THROWS_AS(stratified_folds(tiny, 2, 1.0), ValidationError);
  tiny.push_back(tiny.front());
  CHECK_THROWS_AS(stratified_folds(tiny, 2), ValidationError);
}

TEST_CASE("training set export round-trips in both formats") {
  std::mt19937_64 gen(14);
  const auto records = random_records(gen, 60);
  std::map<std::string, std::string> texts;
  for (const auto& r : records) texts[r.posting_id] = "text\twith tab\nnewline \\ " + r.posting_id;
  const auto plan = stratified_folds(records, 3, 0.1, 1);
  for (auto format : {ExportFormat::Tsv, ExportFormat::Jsonl}) {
    fixtures::TempDir dir("export");
    const auto paths = export_training_set(records, plan, texts, dir.path(), format);
    CHECK(paths.size() == 9);
    const std::string ext = format == ExportFormat::Tsv ? ".tsv" : ".jsonl";
    CHECK(std::filesystem::exists(dir / ("fold0.train" + ext)));
    CHECK(std::filesystem::exists(dir / ("fold2.test" + ext)));
    const auto test_rows = read_training_file(dir / ("fold1.test" + ext));
    const auto expected_ids = plan.test_ids(1);
    REQUIRE(test_rows.size() == expected_ids.size());
    std::map<std::string, GoldRecord> by_id;
    for (const auto& r : records) by_id[r.posting_id] = r;
    for (const auto& row : test_rows) {
      CHECK(row.text == texts.at(row.posting_id));
      CHECK(row.gold_label == by_id.at(row.posting_id).gold_label);
      CHECK(row.gold_binary == by_id.at(row.posting_id).gold_binary);
    }
    std::size_t total = 0;
    for (const char* part : {".train", ".dev", ".test"}) {
      total += read_training_file(dir / ("fold0" + std::string(part) + ext)).size();
    }
    CHECK(total == records.size());
  }
}

TEST_CASE("export refuses records without text") {
  const std::vector<GoldRecord> records = {{"a", Label(1), 1, {}}, {"b", Label(0), 0, {}}};
  const auto plan = stratified_folds(records, 2);
  fixtures::TempDir dir("notext");
  CHECK_THROWS_AS(export_training_set(records, plan, {{"a", "x"}}, dir.path(), ExportFormat::Tsv),
                  NotFoundError);
}

TEST_CASE("fold plan json lists every fold") {
  std::mt19937_64 gen(15);
  const auto plan = stratified_folds(random_records(gen, 30), 3, 0.1, 2);
  const auto j = to_json(plan);
  CHECK(j["k"] == 3);
  CHECK(j["folds"].size() == 3);
  CHECK(j["folds"][0]["test"].size() + j["folds"][0]["dev"].size() +
            j["folds"][0]["train"].size() == 30);
}

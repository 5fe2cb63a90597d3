#include <cmath>
#include <random>

#include "doctest.h"
#include "modlab/agreement.hpp"
#include "modlab/campaign.hpp"
#include "oracles.hpp"

using namespace modlab;

namespace {

constexpr int X = -1;  // missing cell

// Krippendorff's textbook reliability data (4 coders, 12 units), values
// shifted from 1..5 to 0..4.
const std::vector<std::vector<int>> kTextbook = {
    {0, 0, X, 0}, {1, 1, 2, 1}, {2, 2, 2, 2}, {2, 2, 2, 2}, {1, 1, 1, 1}, {0, 1, 2, 3},
    {3, 3, 3, 3}, {0, 0, 1, 0}, {1, 1, 1, 1}, {X, 4, 4, 4}, {X, X, 0, 0}, {X, 2, X, X}};

// Direct count of agreeing unordered pairs.
double brute_micro(const std::vector<std::vector<int>>& rows) {
  double agree = 0, total = 0;
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      for (std::size_t j = i + 1; j < row.size(); ++j) {
        if (row[i] < 0 || row[j] < 0) continue;
        ++total;
        agree += row[i] == row[j];
      }
    }
  }
  return agree / total;
}

std::vector<std::vector<int>> random_rows(std::mt19937_64& gen, int items, int annotators) {
  std::vector<std::vector<int>> rows(items, std::vector<int>(annotators));
  for (auto& row : rows) {
    for (int& v : row) v = gen() % 3 == 0 ? X : static_cast<int>(gen() % 5);
  }
  return rows;
}

}  // namespace

TEST_CASE("matrix accessors and validation") {
  auto m = AnnotationMatrix::from_rows({{0, X}, {4, 2}});
  CHECK(m.item_count() == 2);
  CHECK(m.annotator_count() == 2);
  CHECK_FALSE(m.at(0, 1).has_value());
  CHECK(*m.at(1, 0) == 4);
  CHECK(m.item_labels(1) == std::vector<int>{4, 2});
  CHECK(m.annotator_index("a1") == 1);
  CHECK_THROWS_AS(m.annotator_index("zz"), NotFoundError);
  CHECK_THROWS_AS(m.set(0, 0, 5), ValidationError);
  const auto b = m.binarized();
  CHECK(b.num_classes() == 2);
  CHECK(*b.at(1, 0) == 1);
  CHECK(*b.at(0, 0) == 0);
}

TEST_CASE("label distribution and pair counts") {
  const auto m = AnnotationMatrix::from_rows({{0, 0, 1}, {2, X, X}, {3, 4, X}});
  const auto d = label_distribution(m);
  CHECK(d.total == 6);
  CHECK(d.proportions[0] == doctest::Approx(2.0 / 6));
  CHECK(d.positive_share() == doctest::Approx(4.0 / 6));
  const auto c = count_pairs(m);
  CHECK(c.n_annotations == 6);
  CHECK(c.n_pairs == 4);  // 3 + 0 + 1
}

TEST_CASE("pair table is symmetric with one unit per pair") {
  std::mt19937_64 gen(1);
  for (int trial = 0; trial < 50; ++trial) {
    const auto rows = random_rows(gen, 12, 4);
    const auto m = AnnotationMatrix::from_rows(rows);
    const auto counts = count_pairs(m);
    if (counts.n_pairs == 0) continue;
    const auto t = pair_confusion(m, false);
    CHECK(t.is_symmetric());
    CHECK(t.total() == doctest::Approx(static_cast<double>(counts.n_pairs)));
    CHECK(t.n_pairs == counts.n_pairs);
    CHECK(micro_agreement(t) == doctest::Approx(brute_micro(rows)));
    CHECK(percent_agreement_micro(m, false) == doctest::Approx(brute_micro(rows)));
    const auto tb = pair_confusion(m, true);
    CHECK(tb.num_classes == 2);
    CHECK(tb.total() == doctest::Approx(t.total()));
    const auto collapsed = t.binarized();
    for (int a = 0; a < 2; ++a) {
      for (int b = 0; b < 2; ++b) CHECK(collapsed.at(a, b) == doctest::Approx(tb.at(a, b)));
    }
  }
}

TEST_CASE("relative table and marginals") {
  const auto t = pair_confusion(AnnotationMatrix::from_rows({{0, 1}, {1, 1}}), false);
  CHECK(t.at(0, 1) == 0.5);
  CHECK(t.at(1, 0) == 0.5);
  CHECK(t.at(1, 1) == 1.0);
  const auto r = t.relative();
  CHECK(r.total() == doctest::Approx(1.0));
  const auto marg = r.marginals();
  CHECK(marg[0] == doctest::Approx(0.25));
  CHECK(marg[1] == doctest::Approx(0.75));
}

TEST_CASE("macro percent agreement averages per annotator pair") {
  // a0/a1 agree on 1 of 2 items, a0/a2 on 1 of 1, a1/a2 on 0 of 1.
  const auto m = AnnotationMatrix::from_rows({{1, 1, X}, {2, 3, 2}});
  CHECK(percent_agreement_macro(m, false) == doctest::Approx((0.5 + 1.0 + 0.0) / 3.0));
  CHECK(percent_agreement_micro(m, false) == doctest::Approx(2.0 / 4.0));
  CHECK(percent_agreement_macro(m, true) == doctest::Approx(1.0));
}

TEST_CASE("alpha matches the textbook reliability example") {
  const auto m = AnnotationMatrix::from_rows(kTextbook);
  CHECK(krippendorff_alpha(m, AlphaMetric::Nominal, false) == doctest::Approx(0.743).epsilon(1e-3));
  CHECK(krippendorff_alpha(m, AlphaMetric::Ordinal, false) ==
        doctest::Approx(*oracle::alpha_bruteforce(kTextbook, true)).epsilon(1e-12));
}

TEST_CASE("alpha agrees with the pairable-values oracle on random matrices") {
  std::mt19937_64 gen(2);
  int compared = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const auto rows = random_rows(gen, 1 + static_cast<int>(gen() % 15), 2 + static_cast<int>(gen() % 5));
    const auto m = AnnotationMatrix::from_rows(rows);
    for (bool ordinal : {false, true}) {
      const auto expected = oracle::alpha_bruteforce(rows, ordinal);
      const auto metric = ordinal ? AlphaMetric::Ordinal : AlphaMetric::Nominal;
      if (!expected) {
        CHECK_THROWS_AS(krippendorff_alpha(m, metric, false), UndefinedStatistic);
        continue;
      }
      ++compared;
      CHECK(std::abs(krippendorff_alpha(m, metric, false) - *expected) <= 1e-10);
    }
    // Binarized alpha is the alpha of the binarized matrix.
    std::vector<std::vector<int>> bin_rows = rows;
    for (auto& row : bin_rows) {
      for (int& v : row) v = v < 0 ? v : binarize(v);
    }
    if (const auto expected = oracle::alpha_bruteforce(bin_rows, false, 2)) {
      CHECK(std::abs(krippendorff_alpha(m, AlphaMetric::Nominal, true) - *expected) <= 1e-10);
      CHECK(std::abs(krippendorff_alpha(m, AlphaMetric::Ordinal, true) - *expected) <= 1e-10);
    }
  }
  CHECK(compared > 400);
}

TEST_CASE("alpha is undefined without pairable values or variation") {
  CHECK_THROWS_AS(krippendorff_alpha(AnnotationMatrix::from_rows({{1, X}, {X, 2}}),
                                     AlphaMetric::Nominal, false),
                  UndefinedStatistic);
  CHECK_THROWS_AS(krippendorff_alpha(AnnotationMatrix::from_rows({{2, 2}, {2, 2}}),
                                     AlphaMetric::Ordinal, false),
                  UndefinedStatistic);
}

TEST_CASE("coincidence matrix weights each item by 1/(m-1)") {
  const auto c = coincidence_matrix(AnnotationMatrix::from_rows({{0, 0, 1}}));
  // Ordered pairs: (0,0) x2, (0,1) x2, (1,0) x2; weight 1/2.
  CHECK(c[0 * 5 + 0] == doctest::Approx(1.0));
  CHECK(c[0 * 5 + 1] == doctest::Approx(1.0));
  CHECK(c[1 * 5 + 0] == doctest::Approx(1.0));
  CHECK(c[1 * 5 + 1] == 0.0);
}

TEST_CASE("cohen kappa hand cases") {
  const auto m = AnnotationMatrix::from_rows({{0, 0}, {0, 1}, {1, 1}, {1, 1}});
  CHECK(cohen_kappa(m, "a0", "a1", false) == 0.5);
  const auto perfect = AnnotationMatrix::from_rows({{0, 0}, {3, 3}, {2, 2}});
  CHECK(cohen_kappa(perfect, "a0", "a1", false) == doctest::Approx(1.0));
  // Both annotators always say 2: chance agreement is 1.
  const auto flat = AnnotationMatrix::from_rows({{2, 2}, {2, 2}});
  CHECK_THROWS_AS(cohen_kappa(flat, "a0", "a1", false), UndefinedStatistic);
  // No shared items.
  const auto disjoint = AnnotationMatrix::from_rows({{1, X}, {X, 1}});
  CHECK_THROWS_AS(cohen_kappa(disjoint, "a0", "a1", false), UndefinedStatistic);
}

TEST_CASE("kappa macro skips degenerate pairs and counts them") {
  // a0/a1 defined (kappa 0.5), a2 always says 2 like a0 on shared items -> degenerate.
  const auto m = AnnotationMatrix::from_rows({{0, 0, X}, {0, 1, X}, {1, 1, X}, {1, 1, X},
                                              {X, X, 2}, {X, 2, 2}});
  const auto k = kappa_macro(m, false);
  CHECK(k.value == doctest::Approx(0.5));
  CHECK(k.pairs_used == 1);
  CHECK(k.pairs_skipped == 1);
}

TEST_CASE("pooled pair F1 per class") {
  // Relative table where class 0 pairs mostly agree.
  auto t = PairTable::from_relative(2, {0.6, 0.1, 0.1, 0.2});
  const auto f1 = pair_f1_per_class(t);
  CHECK(f1[0] == doctest::Approx(0.6 / 0.7));
  CHECK(f1[1] == doctest::Approx(0.2 / 0.3));
  CHECK(pairwise_f1_macro(t) == doctest::Approx((0.6 / 0.7 + 0.2 / 0.3) / 2));
  // An unused class has no F1 and is left out of the macro average.
  auto sparse = PairTable::from_relative(3, {0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.5});
  CHECK(std::isnan(pair_f1_per_class(sparse)[1]));
  CHECK(pairwise_f1_macro(sparse) == doctest::Approx(1.0));
}

TEST_CASE("pair F1 from a matrix equals the F1 of its pair table") {
  std::mt19937_64 gen(3);
  for (int trial = 0; trial < 30; ++trial) {
    const auto m = AnnotationMatrix::from_rows(random_rows(gen, 20, 3));
    if (count_pairs(m).n_pairs == 0) continue;
    CHECK(pairwise_f1_macro(m, false) == doctest::Approx(pairwise_f1_macro(pair_confusion(m, false))));
    CHECK(pairwise_f1_macro(m, true) == doctest::Approx(pairwise_f1_macro(pair_confusion(m, true))));
  }
}

TEST_CASE("reference pair table statistics") {
  const auto t = PairTable::from_relative(5, fixtures::reference_pair_table());
  const auto f1 = pair_f1_per_class(t);
  const double expected[] = {0.858, 0.184, 0.342, 0.367, 0.325};
  for (int c = 0; c < 5; ++c) CHECK(f1[c] == doctest::Approx(expected[c]).epsilon(2e-3));
  const auto b = pair_f1_per_class(t.binarized());
  CHECK(b[0] == doctest::Approx(0.858).epsilon(2e-3));
  CHECK(b[1] == doctest::Approx(0.776).epsilon(2e-3));
}

TEST_CASE("agreement report marks undefined statistics instead of failing") {
  const auto report = agreement_report(AnnotationMatrix::from_rows({{2, 2}, {2, 2}}));
  CHECK(report.pct_micro.value == 1.0);
  CHECK_FALSE(report.alpha_nominal.defined());
  CHECK_FALSE(report.alpha_nominal.undefined_reason.empty());
  CHECK_FALSE(report.kappa_macro.defined());
  CHECK(report.n_pairs == 2);
  const auto j = to_json(report);
  CHECK(j["alpha_nominal"].is_null());
  CHECK(j["undefined"].contains("alpha_nominal"));
  CHECK(j["pct_micro"] == 1.0);
  CHECK(j.contains("label_distribution"));
}

TEST_CASE("agreement report on an empty corpus") {
  const auto report = agreement_report(AnnotationMatrix::from_corpus(CorpusState{}));
  CHECK(report.n_annotations == 0);
  CHECK_FALSE(report.pct_micro.defined());
  CHECK_FALSE(report.distribution.has_value());
  CHECK_NOTHROW(to_json(report).dump());
}

TEST_CASE("matrix from a corpus and csv table layout") {
  Store store;
  fixtures::seed_store(store, 2, 2);
  create_calibration_round(store, {fixtures::posting_id(0), fixtures::posting_id(1)}, {"ann0", "ann1"});
  submit_annotation(store, fixtures::posting_id(0), "ann0", Label(1), 1);
  submit_annotation(store, fixtures::posting_id(0), "ann1", Label(3), 1);
  submit_annotation(store, fixtures::posting_id(1), "ann1", Label(0), 1);
  const auto m = AnnotationMatrix::from_corpus(store.snapshot());
  CHECK(m.item_count() == 2);
  CHECK(m.annotators() == std::vector<std::string>{"ann0", "ann1"});
  CHECK(*m.at(0, 1) == 3);
  CHECK_FALSE(m.at(1, 0).has_value());
  const auto csv = pair_table_csv(pair_confusion(m, false).relative());
  CHECK(csv.rfind(",0,1,2,3,4\n", 0) == 0);
  CHECK(csv.find("1,0.000,0.000,0.000,0.500,0.000\n") != std::string::npos);
}

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "modlab/common.hpp"
#include "modlab/corpus_store.hpp"

namespace modlab {

/// Statistic whose preconditions do not hold (no pairs, degenerate
/// marginals, ...). The message says why.
class UndefinedStatistic : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Items x annotators label grid with missing cells.
class AnnotationMatrix {
 public:
  AnnotationMatrix(std::vector<std::string> items, std::vector<std::string> annotators,
                   int num_classes = kNumLabels);

  /// Rows are items, columns annotators; -1 marks a missing cell.
  /// Ids are generated ("i0", "a0", ...).
  static AnnotationMatrix from_rows(const std::vector<std::vector<int>>& rows,
                                    int num_classes = kNumLabels);

  /// All annotations in the store, items and annotators in id order.
  static AnnotationMatrix from_corpus(const CorpusState& state);

  std::size_t item_count() const { return items_.size(); }
  std::size_t annotator_count() const { return annotators_.size(); }
  int num_classes() const { return num_classes_; }
  const std::vector<std::string>& items() const { return items_; }
  const std::vector<std::string>& annotators() const { return annotators_; }

  void set(std::size_t item, std::size_t annotator, int label);
  std::optional<int> at(std::size_t item, std::size_t annotator) const;
  /// Present labels of one item, in annotator order.
  std::vector<int> item_labels(std::size_t item) const;
  std::size_t annotator_index(const std::string& id) const;  // NotFoundError

  /// Copy with every label mapped through binarize; two classes.
  AnnotationMatrix binarized() const;

 private:
  std::vector<std::string> items_;
  std::vector<std::string> annotators_;
  int num_classes_;
  std::vector<std::int8_t> cells_;  // row-major, -1 = missing
};

/// Symmetric label-pairing table over all co-annotation pairs.
struct PairTable {
  int num_classes = kNumLabels;
  std::vector<double> cells;  // num_classes^2, row-major
  double n_pairs = 0;         // number of unordered annotation pairs

  double at(int a, int b) const { return cells[a * num_classes + b]; }
  double& at(int a, int b) { return cells[a * num_classes + b]; }
  double total() const;
  bool is_symmetric() const;
  /// Entries divided by their total.
  PairTable relative() const;
  /// Collapses classes 1.. into class 1.
  PairTable binarized() const;
  /// Marginal (row sum) per class.
  std::vector<double> marginals() const;

  /// Builds a table from already-relative entries (e.g. a table copied from a report).
  static PairTable from_relative(int num_classes, std::vector<double> cells);
};

struct LabelDistribution {
  std::array<double, kNumLabels> proportions{};
  std::size_t total = 0;

  /// Share of labels 1..4.
  double positive_share() const;
};

struct PairCounts {
  std::size_t n_annotations = 0;
  std::size_t n_pairs = 0;
};

enum class AlphaMetric { Nominal, Ordinal };

struct KappaMacro {
  double value = 0.0;
  std::size_t pairs_used = 0;
  std::size_t pairs_skipped = 0;  // degenerate marginals
};

LabelDistribution label_distribution(const AnnotationMatrix& matrix);

PairCounts count_pairs(const AnnotationMatrix& matrix);

/// Unit weight per unordered annotation pair, split over (a,b) and (b,a).
PairTable pair_confusion(const AnnotationMatrix& matrix, bool binarized);

/// Fraction of agreeing pairs: trace of the relative table.
double micro_agreement(const PairTable& table);
double percent_agreement_micro(const AnnotationMatrix& matrix, bool binarized);

/// Mean per-annotator-pair agreement rate over pairs sharing an item.
double percent_agreement_macro(const AnnotationMatrix& matrix, bool binarized);

/// Coincidence matrix: each item with m >= 2 labels contributes
/// 1/(m-1) per ordered pair of distinct annotators.
std::vector<double> coincidence_matrix(const AnnotationMatrix& matrix);

/// Krippendorff's alpha from the coincidence matrix. With `binarized`,
/// labels are binarized first (metric is then irrelevant: both agree).
double krippendorff_alpha(const AnnotationMatrix& matrix, AlphaMetric metric, bool binarized);

double cohen_kappa(const AnnotationMatrix& matrix, const std::string& annotator_a,
                   const std::string& annotator_b, bool binarized);

/// Unweighted mean of Cohen's kappa over annotator pairs with shared items;
/// pairs with degenerate marginals are skipped and counted.
KappaMacro kappa_macro(const AnnotationMatrix& matrix, bool binarized);

/// Per-class F1 over the pooled symmetric table (precision = recall =
/// O_cc / p_c). Classes with zero marginal get no entry (NaN).
std::vector<double> pair_f1_per_class(const PairTable& table);
double pairwise_f1_macro(const PairTable& table);
double pairwise_f1_macro(const AnnotationMatrix& matrix, bool binarized);

/// A statistic value or the reason it is undefined.
struct Statistic {
  std::optional<double> value;
  std::string undefined_reason;

  bool defined() const { return value.has_value(); }
};

struct AgreementReport {
  Statistic alpha_nominal, alpha_ordinal, alpha_binary;
  Statistic pct_micro, pct_macro, pct_micro_binary, pct_macro_binary;
  Statistic kappa_macro, kappa_macro_binary;
  Statistic f1_macro_pairs, f1_macro_pairs_binary;
  std::size_t kappa_pairs_skipped = 0;
  std::size_t kappa_pairs_skipped_binary = 0;
  std::size_t n_annotations = 0;
  std::size_t n_pairs = 0;
  std::optional<LabelDistribution> distribution;
  std::optional<PairTable> pair_table;  // relative form
};

/// Computes every statistic; undefined ones carry a reason instead of failing.
AgreementReport agreement_report(const AnnotationMatrix& matrix);

nlohmann::json to_json(const AgreementReport& report);
nlohmann::json to_json(const LabelDistribution& distribution);
nlohmann::json to_json(const PairTable& table);

/// CSV with label headers on rows and columns, values rounded to 3 decimals.
std::string pair_table_csv(const PairTable& table);

}  // namespace modlab

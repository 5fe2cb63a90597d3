#include "modlab/agreement.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <set>

namespace modlab {
namespace {

const AnnotationMatrix& pick(const AnnotationMatrix& matrix, bool binarized,
                             std::optional<AnnotationMatrix>& storage) {
  if (!binarized) return matrix;
  storage.emplace(matrix.binarized());
  return *storage;
}

double ordinal_delta(const std::vector<double>& marginals, int c, int k) {
  if (c == k) return 0.0;
  const int lo = std::min(c, k);
  const int hi = std::max(c, k);
  double sum = 0.0;
  for (int g = lo; g <= hi; ++g) sum += marginals[g];
  const double d = sum - (marginals[lo] + marginals[hi]) / 2.0;
  return d * d;
}

}  // namespace

// ---------------------------------------------------------------------------
// AnnotationMatrix

AnnotationMatrix::AnnotationMatrix(std::vector<std::string> items,
                                   std::vector<std::string> annotators, int num_classes)
    : items_(std::move(items)),
      annotators_(std::move(annotators)),
      num_classes_(num_classes),
      cells_(items_.size() * annotators_.size(), std::int8_t{-1}) {
  if (num_classes < 2 || num_classes > kNumLabels) {
    throw ValidationError("matrix needs between 2 and 5 classes");
  }
}

AnnotationMatrix AnnotationMatrix::from_rows(const std::vector<std::vector<int>>& rows,
                                             int num_classes) {
  std::size_t width = 0;
  for (const auto& row : rows) width = std::max(width, row.size());
  std::vector<std::string> items;
  std::vector<std::string> annotators;
  for (std::size_t i = 0; i < rows.size(); ++i) items.push_back("i" + std::to_string(i));
  for (std::size_t a = 0; a < width; ++a) annotators.push_back("a" + std::to_string(a));
  AnnotationMatrix m(std::move(items), std::move(annotators), num_classes);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t a = 0; a < rows[i].size(); ++a) {
      if (rows[i][a] >= 0) m.set(i, a, rows[i][a]);
    }
  }
  return m;
}

AnnotationMatrix AnnotationMatrix::from_corpus(const CorpusState& state) {
  std::set<std::string> item_ids;
  std::set<std::string> annotator_ids;
  for (const auto& [key, a] : state.annotations) {
    item_ids.insert(key.first);
    annotator_ids.insert(key.second);
  }
  std::vector<std::string> items(item_ids.begin(), item_ids.end());
  std::vector<std::string> annotators(annotator_ids.begin(), annotator_ids.end());
  std::map<std::string, std::size_t> item_index;
  std::map<std::string, std::size_t> annotator_index;
  for (std::size_t i = 0; i < items.size(); ++i) item_index[items[i]] = i;
  for (std::size_t a = 0; a < annotators.size(); ++a) annotator_index[annotators[a]] = a;
  AnnotationMatrix m(std::move(items), std::move(annotators));
  for (const auto& [key, a] : state.annotations) {
    m.set(item_index.at(key.first), annotator_index.at(key.second), a.label.value());
  }
  return m;
}

void AnnotationMatrix::set(std::size_t item, std::size_t annotator, int label) {
  if (item >= items_.size() || annotator >= annotators_.size()) {
    throw ValidationError("matrix cell out of bounds");
  }
  if (label < 0 || label >= num_classes_) {
    throw ValidationError("label " + std::to_string(label) + " outside 0.." +
                          std::to_string(num_classes_ - 1));
  }
  cells_[item * annotators_.size() + annotator] = static_cast<std::int8_t>(label);
}

std::optional<int> AnnotationMatrix::at(std::size_t item, std::size_t annotator) const {
  const int v = cells_[item * annotators_.size() + annotator];
  if (v < 0) return std::nullopt;
  return v;
}

std::vector<int> AnnotationMatrix::item_labels(std::size_t item) const {
  std::vector<int> out;
  const std::size_t width = annotators_.size();
  for (std::size_t a = 0; a < width; ++a) {
    const int v = cells_[item * width + a];
    if (v >= 0) out.push_back(v);
  }
  return out;
}

std::size_t AnnotationMatrix::annotator_index(const std::string& id) const {
  auto it = std::find(annotators_.begin(), annotators_.end(), id);
  if (it == annotators_.end()) throw NotFoundError("annotator '" + id + "' not in matrix");
  return static_cast<std::size_t>(it - annotators_.begin());
}

AnnotationMatrix AnnotationMatrix::binarized() const {
  AnnotationMatrix out(items_, annotators_, 2);
  for (std::size_t i = 0; i < cells_.size(); ++i) {
    if (cells_[i] >= 0) out.cells_[i] = static_cast<std::int8_t>(binarize(int{cells_[i]}));
  }
  return out;
}

// ---------------------------------------------------------------------------
// PairTable

double PairTable::total() const {
  double sum = 0.0;
  for (double v : cells) sum += v;
  return sum;
}

bool PairTable::is_symmetric() const {
  for (int a = 0; a < num_classes; ++a) {
    for (int b = a + 1; b < num_classes; ++b) {
      if (at(a, b) != at(b, a)) return false;
    }
  }
  return true;
}

PairTable PairTable::relative() const {
  PairTable out = *this;
  const double sum = total();
  if (sum <= 0.0) throw UndefinedStatistic("pair table is empty");
  for (double& v : out.cells) v /= sum;
  return out;
}

PairTable PairTable::binarized() const {
  PairTable out;
  out.num_classes = 2;
  out.cells.assign(4, 0.0);
  out.n_pairs = n_pairs;
  for (int a = 0; a < num_classes; ++a) {
    for (int b = 0; b < num_classes; ++b) out.at(binarize(a), binarize(b)) += at(a, b);
  }
  return out;
}

std::vector<double> PairTable::marginals() const {
  std::vector<double> out(num_classes, 0.0);
  for (int a = 0; a < num_classes; ++a) {
    for (int b = 0; b < num_classes; ++b) out[a] += at(a, b);
  }
  return out;
}

PairTable PairTable::from_relative(int num_classes, std::vector<double> cells) {
  if (cells.size() != static_cast<std::size_t>(num_classes * num_classes)) {
    throw ValidationError("pair table needs num_classes^2 entries");
  }
  PairTable t;
  t.num_classes = num_classes;
  t.cells = std::move(cells);
  t.n_pairs = 1.0;
  return t;
}

double LabelDistribution::positive_share() const {
  double sum = 0.0;
  for (int c = 1; c < kNumLabels; ++c) sum += proportions[c];
  return sum;
}

// ---------------------------------------------------------------------------
// Statistics

LabelDistribution label_distribution(const AnnotationMatrix& matrix) {
  std::array<std::size_t, kNumLabels> counts{};
  std::size_t total = 0;
  for (std::size_t i = 0; i < matrix.item_count(); ++i) {
    for (int label : matrix.item_labels(i)) {
      ++counts[label];
      ++total;
    }
  }
  if (total == 0) throw UndefinedStatistic("label distribution of an empty matrix");
  LabelDistribution d;
  d.total = total;
  for (int c = 0; c < kNumLabels; ++c) {
    d.proportions[c] = static_cast<double>(counts[c]) / static_cast<double>(total);
  }
  return d;
}

PairCounts count_pairs(const AnnotationMatrix& matrix) {
  PairCounts counts;
  for (std::size_t i = 0; i < matrix.item_count(); ++i) {
    const std::size_t m = matrix.item_labels(i).size();
    counts.n_annotations += m;
    if (m >= 2) counts.n_pairs += m * (m - 1) / 2;
  }
  return counts;
}

PairTable pair_confusion(const AnnotationMatrix& matrix, bool binarized) {
  std::optional<AnnotationMatrix> storage;
  const auto& m = pick(matrix, binarized, storage);
  PairTable t;
  t.num_classes = m.num_classes();
  t.cells.assign(static_cast<std::size_t>(t.num_classes * t.num_classes), 0.0);
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < m.item_count(); ++i) {
    const auto labels = m.item_labels(i);
    for (std::size_t x = 0; x < labels.size(); ++x) {
      for (std::size_t y = x + 1; y < labels.size(); ++y) {
        t.at(labels[x], labels[y]) += 0.5;
        t.at(labels[y], labels[x]) += 0.5;
        ++pairs;
      }
    }
  }
  if (pairs == 0) throw UndefinedStatistic("no item has two or more annotations");
  t.n_pairs = static_cast<double>(pairs);
  return t;
}

double micro_agreement(const PairTable& table) {
  const PairTable rel = table.relative();
  double trace = 0.0;
  for (int c = 0; c < rel.num_classes; ++c) trace += rel.at(c, c);
  return trace;
}

double percent_agreement_micro(const AnnotationMatrix& matrix, bool binarized) {
  return micro_agreement(pair_confusion(matrix, binarized));
}

double percent_agreement_macro(const AnnotationMatrix& matrix, bool binarized) {
  std::optional<AnnotationMatrix> storage;
  const auto& m = pick(matrix, binarized, storage);
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < m.annotator_count(); ++a) {
    for (std::size_t b = a + 1; b < m.annotator_count(); ++b) {
      std::size_t shared = 0;
      std::size_t agree = 0;
      for (std::size_t i = 0; i < m.item_count(); ++i) {
        const auto la = m.at(i, a);
        const auto lb = m.at(i, b);
        if (!la || !lb) continue;
        ++shared;
        if (*la == *lb) ++agree;
      }
      if (shared == 0) continue;
      sum += static_cast<double>(agree) / static_cast<double>(shared);
      ++pairs;
    }
  }
  if (pairs == 0) throw UndefinedStatistic("no annotator pair shares an item");
  return sum / static_cast<double>(pairs);
}

std::vector<double> coincidence_matrix(const AnnotationMatrix& matrix) {
  const int k = matrix.num_classes();
  std::vector<double> o(static_cast<std::size_t>(k * k), 0.0);
  for (std::size_t i = 0; i < matrix.item_count(); ++i) {
    const auto labels = matrix.item_labels(i);
    const std::size_t m = labels.size();
    if (m < 2) continue;
    std::vector<double> counts(k, 0.0);
    for (int v : labels) counts[v] += 1.0;
    const double weight = 1.0 / static_cast<double>(m - 1);
    // Ordered pairs of distinct annotators: n_c * n_k, minus self-pairs on the diagonal.
    for (int c = 0; c < k; ++c) {
      if (counts[c] == 0.0) continue;
      for (int d = 0; d < k; ++d) {
        const double pairs = c == d ? counts[c] * (counts[c] - 1.0) : counts[c] * counts[d];
        o[c * k + d] += pairs * weight;
      }
    }
  }
  return o;
}

double krippendorff_alpha(const AnnotationMatrix& matrix, AlphaMetric metric, bool binarized) {
  std::optional<AnnotationMatrix> storage;
  const auto& m = pick(matrix, binarized, storage);
  const int k = m.num_classes();
  const auto o = coincidence_matrix(m);
  std::vector<double> marginals(k, 0.0);
  double n = 0.0;
  for (int c = 0; c < k; ++c) {
    for (int d = 0; d < k; ++d) marginals[c] += o[c * k + d];
    n += marginals[c];
  }
  if (n == 0.0) throw UndefinedStatistic("alpha undefined: no item has two or more annotations");

  auto delta = [&](int c, int d) {
    if (metric == AlphaMetric::Nominal) return c == d ? 0.0 : 1.0;
    return ordinal_delta(marginals, c, d);
  };
  double observed = 0.0;
  double expected = 0.0;
  for (int c = 0; c < k; ++c) {
    for (int d = 0; d < k; ++d) {
      const double dl = delta(c, d);
      observed += o[c * k + d] * dl;
      expected += marginals[c] * marginals[d] * dl;
    }
  }
  if (expected == 0.0) {
    throw UndefinedStatistic("alpha undefined: only one label value among pairable annotations");
  }
  return 1.0 - (n - 1.0) * observed / expected;
}

double cohen_kappa(const AnnotationMatrix& matrix, const std::string& annotator_a,
                   const std::string& annotator_b, bool binarized) {
  std::optional<AnnotationMatrix> storage;
  const auto& m = pick(matrix, binarized, storage);
  const std::size_t a = m.annotator_index(annotator_a);
  const std::size_t b = m.annotator_index(annotator_b);
  if (a == b) throw ValidationError("kappa needs two different annotators");
  const int k = m.num_classes();
  std::vector<double> ma(k, 0.0);
  std::vector<double> mb(k, 0.0);
  std::size_t shared = 0;
  std::size_t agree = 0;
  for (std::size_t i = 0; i < m.item_count(); ++i) {
    const auto la = m.at(i, a);
    const auto lb = m.at(i, b);
    if (!la || !lb) continue;
    ++shared;
    if (*la == *lb) ++agree;
    ma[*la] += 1.0;
    mb[*lb] += 1.0;
  }
  if (shared == 0) {
    throw UndefinedStatistic("kappa undefined: " + annotator_a + " and " + annotator_b +
                             " share no item");
  }
  const double n = static_cast<double>(shared);
  const double p_o = static_cast<double>(agree) / n;
  double p_e = 0.0;
  for (int c = 0; c < k; ++c) p_e += (ma[c] / n) * (mb[c] / n);
  if (p_e >= 1.0 - 1e-12) {
    throw UndefinedStatistic("kappa undefined: degenerate marginals for " + annotator_a +
                             " and " + annotator_b + " (expected agreement 1)");
  }
  return (p_o - p_e) / (1.0 - p_e);
}

KappaMacro kappa_macro(const AnnotationMatrix& matrix, bool binarized) {
  std::optional<AnnotationMatrix> storage;
  const auto& m = pick(matrix, binarized, storage);
  KappaMacro result;
  double sum = 0.0;
  const auto& ids = m.annotators();
  for (std::size_t a = 0; a < ids.size(); ++a) {
    for (std::size_t b = a + 1; b < ids.size(); ++b) {
      bool shares = false;
      for (std::size_t i = 0; i < m.item_count() && !shares; ++i) {
        shares = m.at(i, a).has_value() && m.at(i, b).has_value();
      }
      if (!shares) continue;
      try {
        sum += cohen_kappa(m, ids[a], ids[b], false);
        ++result.pairs_used;
      } catch (const UndefinedStatistic&) {
        ++result.pairs_skipped;
      }
    }
  }
  if (result.pairs_used == 0) {
    throw UndefinedStatistic("kappa macro undefined: no annotator pair with a defined kappa");
  }
  result.value = sum / static_cast<double>(result.pairs_used);
  return result;
}

std::vector<double> pair_f1_per_class(const PairTable& table) {
  const PairTable rel = table.relative();
  const auto p = rel.marginals();
  std::vector<double> out(rel.num_classes, std::numeric_limits<double>::quiet_NaN());
  for (int c = 0; c < rel.num_classes; ++c) {
    if (p[c] > 0.0) out[c] = rel.at(c, c) / p[c];
  }
  return out;
}

double pairwise_f1_macro(const PairTable& table) {
  double sum = 0.0;
  int classes = 0;
  for (double f1 : pair_f1_per_class(table)) {
    if (std::isnan(f1)) continue;
    sum += f1;
    ++classes;
  }
  return sum / classes;
}

double pairwise_f1_macro(const AnnotationMatrix& matrix, bool binarized) {
  return pairwise_f1_macro(pair_confusion(matrix, binarized));
}

// ---------------------------------------------------------------------------
// Report

namespace {

Statistic capture(const std::function<double()>& fn) {
  Statistic s;
  try {
    s.value = fn();
  } catch (const UndefinedStatistic& e) {
    s.undefined_reason = e.what();
  }
  return s;
}

}  // namespace

AgreementReport agreement_report(const AnnotationMatrix& matrix) {
  AgreementReport r;
  const auto counts = count_pairs(matrix);
  r.n_annotations = counts.n_annotations;
  r.n_pairs = counts.n_pairs;
  if (counts.n_annotations > 0) r.distribution = label_distribution(matrix);
  if (counts.n_pairs > 0) r.pair_table = pair_confusion(matrix, false).relative();

  const auto binary = matrix.binarized();
  r.alpha_nominal = capture([&] { return krippendorff_alpha(matrix, AlphaMetric::Nominal, false); });
  r.alpha_ordinal = capture([&] { return krippendorff_alpha(matrix, AlphaMetric::Ordinal, false); });
  r.alpha_binary = capture([&] { return krippendorff_alpha(binary, AlphaMetric::Nominal, false); });
  r.pct_micro = capture([&] { return percent_agreement_micro(matrix, false); });
  r.pct_macro = capture([&] { return percent_agreement_macro(matrix, false); });
  r.pct_micro_binary = capture([&] { return percent_agreement_micro(binary, false); });
  r.pct_macro_binary = capture([&] { return percent_agreement_macro(binary, false); });
  r.kappa_macro = capture([&] {
    const auto k = kappa_macro(matrix, false);
    r.kappa_pairs_skipped = k.pairs_skipped;
    return k.value;
  });
  r.kappa_macro_binary = capture([&] {
    const auto k = kappa_macro(binary, false);
    r.kappa_pairs_skipped_binary = k.pairs_skipped;
    return k.value;
  });
  r.f1_macro_pairs = capture([&] { return pairwise_f1_macro(matrix, false); });
  r.f1_macro_pairs_binary = capture([&] { return pairwise_f1_macro(binary, false); });
  return r;
}

nlohmann::json to_json(const LabelDistribution& distribution) {
  nlohmann::json j;
  j["proportions"] = distribution.proportions;
  j["total"] = distribution.total;
  j["positive_share"] = distribution.positive_share();
  return j;
}

nlohmann::json to_json(const PairTable& table) {
  nlohmann::json rows = nlohmann::json::array();
  for (int a = 0; a < table.num_classes; ++a) {
    nlohmann::json row = nlohmann::json::array();
    for (int b = 0; b < table.num_classes; ++b) row.push_back(table.at(a, b));
    rows.push_back(std::move(row));
  }
  return nlohmann::json{{"num_classes", table.num_classes}, {"cells", std::move(rows)}};
}

nlohmann::json to_json(const AgreementReport& report) {
  nlohmann::json j;
  nlohmann::json undefined = nlohmann::json::object();
  auto put = [&](const char* name, const Statistic& s) {
    if (s.defined()) {
      j[name] = *s.value;
    } else {
      j[name] = nullptr;
      undefined[name] = s.undefined_reason;
    }
  };
  put("alpha_nominal", report.alpha_nominal);
  put("alpha_ordinal", report.alpha_ordinal);
  put("alpha_binary", report.alpha_binary);
  put("pct_micro", report.pct_micro);
  put("pct_macro", report.pct_macro);
  put("pct_micro_binary", report.pct_micro_binary);
  put("pct_macro_binary", report.pct_macro_binary);
  put("kappa_macro", report.kappa_macro);
  put("kappa_macro_binary", report.kappa_macro_binary);
  put("f1_macro_pairs", report.f1_macro_pairs);
  put("f1_macro_pairs_binary", report.f1_macro_pairs_binary);
  j["kappa_pairs_skipped"] = report.kappa_pairs_skipped;
  j["kappa_pairs_skipped_binary"] = report.kappa_pairs_skipped_binary;
  j["n_annotations"] = report.n_annotations;
  j["n_pairs"] = report.n_pairs;
  j["label_distribution"] =
      report.distribution ? to_json(*report.distribution) : nlohmann::json(nullptr);
  j["pair_table"] = report.pair_table ? to_json(*report.pair_table) : nlohmann::json(nullptr);
  j["undefined"] = std::move(undefined);
  return j;
}

std::string pair_table_csv(const PairTable& table) {
  std::string out;
  for (int b = 0; b < table.num_classes; ++b) out += "," + std::to_string(b);
  out.push_back('\n');
  for (int a = 0; a < table.num_classes; ++a) {
    out += std::to_string(a);
    for (int b = 0; b < table.num_classes; ++b) {
      char buf[32];
      std::snprintf(buf, sizeof buf, ",%.3f", table.at(a, b));
      out += buf;
    }
    out.push_back('\n');
  }
  return out;
}

}  // namespace modlab

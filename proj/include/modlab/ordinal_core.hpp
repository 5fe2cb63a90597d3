#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "modlab/common.hpp"
#include "modlab/resolve.hpp"

namespace modlab {

/// Number of cumulative (rank) outputs of the ordinal head.
inline constexpr int kNumThresholds = kNumLabels - 1;
inline constexpr int kCheckpointSchemaVersion = 1;
inline constexpr std::size_t kDefaultHiddenUnits = 768;

/// One labeled feature vector. `label` is the 0..4 target of the ordinal
/// and multiclass heads, `binary` the 0/1 target of the binary head.
struct Sample {
  std::string id;
  std::vector<double> features;
  int label = 0;
  int binary = 0;
};

struct Dataset {
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  /// Feature dimension; throws ValidationError when empty or inconsistent,
  /// or when a value is non-finite or a target is out of range.
  std::size_t dimension() const;
  /// Samples whose ids are listed, in list order. NotFoundError on a miss.
  Dataset subset(const std::vector<std::string>& ids) const;
};

/// Fully connected layer, weight stored row-major (out x in).
struct Dense {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weight;
  std::vector<double> bias;

  static Dense zeros(std::size_t in, std::size_t out);
};

/// Hidden ReLU layer followed by one logit.
struct BinaryHead {
  Dense hidden;
  Dense output;
};

/// Hidden ReLU layer followed by one logit per class (softmax).
struct MulticlassHead {
  Dense hidden;
  Dense output;
};

/// Hidden ReLU layer, one shared score g(x) and K-1 independent thresholds;
/// cumulative logit k is g(x) + thresholds[k].
struct CoralHead {
  Dense hidden;
  Dense score;
  std::array<double, kNumThresholds> thresholds{};
};

enum class ModelKind { Bin, Multi, Coral, BinMulti, BinCoral };
enum class HeadKind { Binary, Multiclass, Coral };

std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view text);  // bin, multi, coral, bin_multi, bin_coral
std::string_view display_name(ModelKind kind);      // Bin, Multi, Coral, BinMulti, BinCoral
std::string_view to_string(HeadKind head);
std::vector<HeadKind> heads_of(ModelKind kind);

struct Model {
  ModelKind kind = ModelKind::Coral;
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  std::optional<BinaryHead> binary;
  std::optional<MulticlassHead> multi;
  std::optional<CoralHead> coral;
  double lambda_bin = 1.0;  // weight of the binary loss in dual models
  double lambda_ord = 1.0;  // weight of the coral / multiclass loss in dual models

  std::size_t parameter_count() const;
};

/// Model with every parameter zero.
Model zero_model(ModelKind kind, std::size_t input_dim, std::size_t hidden_dim);

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases, zero
/// thresholds. Each head draws from its own stream, so a head initializes
/// identically whether it sits alone or in a dual model.
Model init_model(ModelKind kind, std::size_t input_dim, std::size_t hidden_dim,
                 std::uint64_t seed);

/// Flat view of one parameter block; `decays` marks weight matrices
/// (biases and thresholds are exempt from weight decay).
struct ParamBlock {
  std::span<double> values;
  bool decays = false;
};

/// All parameter blocks in a fixed order.
std::vector<ParamBlock> parameter_blocks(Model& model);

// --- numerics ---------------------------------------------------------------

double sigmoid(double z);
/// log(1 + exp(z)) without overflow.
double softplus(double z);

struct CoralOutput {
  double score = 0.0;  // g(x)
  std::array<double, kNumThresholds> logits{};
  std::array<double, kNumThresholds> probabilities{};
};

CoralOutput coral_forward(const CoralHead& head, std::span<const double> x);

/// Sum over thresholds of binary cross-entropy against t_k = [y >= k].
double coral_loss(std::span<const double> logits, Label y);

/// Number of cumulative probabilities above 0.5.
Label coral_decode(std::span<const double> probabilities);

double binary_logit(const BinaryHead& head, std::span<const double> x);
double binary_loss(double logit, int y);
/// 1 iff sigmoid(logit) > 0.5; a logit of exactly 0 decodes to 0.
int binary_decode(double logit);

std::vector<double> multiclass_logits(const MulticlassHead& head, std::span<const double> x);
double multiclass_loss(std::span<const double> logits, Label y);
/// Argmax, ties to the lower class.
Label multiclass_decode(std::span<const double> logits);

/// Total training loss of one sample: single-head models use their head's
/// loss, dual models lambda_bin * binary + lambda_ord * (coral | multiclass).
double sample_loss(const Model& model, const Sample& sample);

/// Dual-head loss with the binary target derived as binarize(y).
double dual_loss(const Model& model, std::span<const double> x, Label y);

/// Mean loss over the samples; adds the gradient of that mean into `grad`
/// (same shape as `model`).
double loss_and_gradient(const Model& model, std::span<const Sample* const> batch, Model& grad);

struct Prediction {
  std::optional<int> binary;
  std::optional<int> label;  // from the coral or multiclass head
};

Prediction predict(const Model& model, std::span<const double> x);

/// Probability of the positive class from the binary head, or from the
/// ordinal head (P(y >= 1)) when there is no binary head.
double positive_probability(const Model& model, std::span<const double> x);

// --- training -----------------------------------------------------------------

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 8;
  std::size_t warmup_steps = 200;
  double weight_decay = 0.01;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  std::size_t hidden_dim = kDefaultHiddenUnits;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double lambda_bin = 1.0;
  double lambda_ord = 1.0;
  bool parallel_folds = false;

  void validate() const;
};

/// Learning rate of update `step` (0-based): linear warmup from 0 over
/// min(warmup_steps, total_steps) steps, constant afterwards.
double learning_rate_at(const TrainConfig& config, std::size_t step, std::size_t total_steps);

/// Training aborted on a non-finite loss.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainResult {
  Model model;
  std::vector<double> loss_history;    // mean sample loss per epoch
  std::vector<double> dev_f1_history;  // per epoch, when a dev set is given
  std::size_t best_epoch = 0;          // 1-based; 0 = no epoch ran
};

/// Mini-batch AdamW with decoupled weight decay. With a dev set, the
/// returned model is the one from the epoch with the best dev F1-macro
/// (mean over the model's heads; ties keep the earlier epoch).
TrainResult train(const Dataset& data, ModelKind kind, const TrainConfig& config,
                  const Dataset* dev = nullptr);

/// Largest relative difference between the analytic gradient of the mean
/// loss and central differences with step h. Gradients are compared as
/// |a - n| / max(|a|, |n|, 1e-6); smaller magnitudes are compared absolutely.
double grad_check(const Model& model, std::span<const Sample> samples, double h = 1e-5);

// --- evaluation ---------------------------------------------------------------

struct EvalScores {
  double accuracy = 0.0;
  double f1_macro = 0.0;
};

/// Accuracy and F1-macro averaged over the classes present in `gold`.
EvalScores score_predictions(std::span<const int> gold, std::span<const int> predicted);

EvalScores evaluate(const Model& model, const Dataset& data, HeadKind head);

struct EvalResult {
  HeadKind head = HeadKind::Binary;
  std::vector<double> accuracy;  // per fold
  std::vector<double> f1_macro;  // per fold
  double accuracy_mean = 0.0;
  double accuracy_std = 0.0;
  double f1_macro_mean = 0.0;
  double f1_macro_std = 0.0;
};

struct CvReport {
  ModelKind kind = ModelKind::Coral;
  std::vector<EvalResult> heads;
  std::vector<std::size_t> best_epochs;  // per fold
};

/// Sample mean and (n-1) standard deviation; std is 0 for a single value.
std::pair<double, double> mean_std(std::span<const double> values);

/// Trains on each fold's train split (dev split drives epoch selection) and
/// scores the held-out fold.
CvReport cross_validate(const Dataset& data, ModelKind kind, const TrainConfig& config,
                        const FoldPlan& plan);

/// Rows: model, head, accuracy_mean, accuracy_std, f1_macro_mean, f1_macro_std.
std::string cv_report_tsv(const std::vector<CvReport>& reports);

// --- persistence --------------------------------------------------------------

nlohmann::json model_to_json(const Model& model);
Model model_from_json(const nlohmann::json& j);

}  // namespace modlab

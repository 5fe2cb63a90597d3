#include "modlab/ordinal_core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <future>
#include <map>
#include <set>
#include <tuple>

namespace modlab {
namespace {

constexpr std::uint64_t kBinaryStream = 1;
constexpr std::uint64_t kMultiStream = 2;
constexpr std::uint64_t kCoralStream = 3;
constexpr std::uint64_t kShuffleStream = 100;

bool has_binary(ModelKind kind) {
  return kind == ModelKind::Bin || kind == ModelKind::BinMulti || kind == ModelKind::BinCoral;
}
bool has_multi(ModelKind kind) { return kind == ModelKind::Multi || kind == ModelKind::BinMulti; }
bool has_coral(ModelKind kind) { return kind == ModelKind::Coral || kind == ModelKind::BinCoral; }
bool is_dual(ModelKind kind) { return kind == ModelKind::BinMulti || kind == ModelKind::BinCoral; }

void check_dim(const Model& model, std::span<const double> x) {
  if (x.size() != model.input_dim) {
    throw ValidationError("feature dimension " + std::to_string(x.size()) +
                          " does not match model input " + std::to_string(model.input_dim));
  }
}

Dense random_dense(std::size_t in, std::size_t out, Rng& rng) {
  Dense d = Dense::zeros(in, out);
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  for (double& w : d.weight) w = rng.uniform(-bound, bound);
  for (double& b : d.bias) b = rng.uniform(-bound, bound);
  return d;
}

void dense_forward(const Dense& d, std::span<const double> x, std::vector<double>& out) {
  out.resize(d.out);
  for (std::size_t o = 0; o < d.out; ++o) {
    double sum = d.bias[o];
    const double* row = d.weight.data() + o * d.in;
    for (std::size_t i = 0; i < d.in; ++i) sum += row[i] * x[i];
    out[o] = sum;
  }
}

// Hidden pre-activations and ReLU activations of one head.
struct HiddenState {
  std::vector<double> pre;
  std::vector<double> act;
};

void hidden_forward(const Dense& hidden, std::span<const double> x, HiddenState& s) {
  dense_forward(hidden, x, s.pre);
  s.act.resize(s.pre.size());
  for (std::size_t j = 0; j < s.pre.size(); ++j) s.act[j] = s.pre[j] > 0.0 ? s.pre[j] : 0.0;
}

// Backpropagates output-layer gradients `dout` through output and hidden.
void head_backward(const Dense& hidden, const Dense& output, std::span<const double> x,
                   const HiddenState& s, std::span<const double> dout, Dense& g_hidden,
                   Dense& g_output) {
  std::vector<double> dpre(hidden.out, 0.0);
  for (std::size_t o = 0; o < output.out; ++o) {
    const double d = dout[o];
    if (d == 0.0) continue;
    g_output.bias[o] += d;
    const double* w = output.weight.data() + o * output.in;
    double* gw = g_output.weight.data() + o * output.in;
    for (std::size_t j = 0; j < output.in; ++j) {
      gw[j] += d * s.act[j];
      dpre[j] += d * w[j];
    }
  }
  for (std::size_t j = 0; j < hidden.out; ++j) {
    if (s.pre[j] <= 0.0 || dpre[j] == 0.0) continue;
    const double d = dpre[j];
    g_hidden.bias[j] += d;
    double* gw = g_hidden.weight.data() + j * hidden.in;
    for (std::size_t i = 0; i < hidden.in; ++i) gw[i] += d * x[i];
  }
}

double log_sum_exp(std::span<const double> z) {
  const double m = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - m);
  return m + std::log(sum);
}

double binary_head_logit(const BinaryHead& head, std::span<const double> x, HiddenState& s) {
  hidden_forward(head.hidden, x, s);
  std::vector<double> out;
  dense_forward(head.output, s.act, out);
  return out[0];
}

CoralOutput coral_head_forward(const CoralHead& head, std::span<const double> x, HiddenState& s) {
  hidden_forward(head.hidden, x, s);
  std::vector<double> out;
  dense_forward(head.score, s.act, out);
  CoralOutput result;
  result.score = out[0];
  for (int k = 0; k < kNumThresholds; ++k) {
    result.logits[k] = result.score + head.thresholds[k];
    result.probabilities[k] = sigmoid(result.logits[k]);
  }
  return result;
}

std::vector<double> multi_head_logits(const MulticlassHead& head, std::span<const double> x,
                                      HiddenState& s) {
  hidden_forward(head.hidden, x, s);
  std::vector<double> out;
  dense_forward(head.output, s.act, out);
  return out;
}

void visit_dense(Dense& d, std::vector<ParamBlock>& blocks) {
  blocks.push_back({std::span<double>(d.weight), true});
  blocks.push_back({std::span<double>(d.bias), false});
}

void require_finite(double value, const char* what) {
  if (!std::isfinite(value)) throw ValidationError(std::string("non-finite ") + what);
}

nlohmann::json dense_to_json(const Dense& d) {
  return nlohmann::json{{"in", d.in}, {"out", d.out}, {"weight", d.weight}, {"bias", d.bias}};
}

Dense dense_from_json(const nlohmann::json& j) {
  Dense d;
  d.in = j.at("in").get<std::size_t>();
  d.out = j.at("out").get<std::size_t>();
  d.weight = j.at("weight").get<std::vector<double>>();
  d.bias = j.at("bias").get<std::vector<double>>();
  if (d.weight.size() != d.in * d.out || d.bias.size() != d.out) {
    throw ValidationError("checkpoint layer has inconsistent shape");
  }
  return d;
}

int gold_for(const Sample& s, HeadKind head) {
  return head == HeadKind::Binary ? s.binary : s.label;
}

int predicted_for(const Prediction& p, HeadKind head) {
  return head == HeadKind::Binary ? *p.binary : *p.label;
}

}  // namespace

// ---------------------------------------------------------------------------
// Dataset and model plumbing

std::size_t Dataset::dimension() const {
  if (samples.empty()) throw ValidationError("dataset is empty");
  const std::size_t d = samples.front().features.size();
  if (d == 0) throw ValidationError("samples have no features");
  for (const auto& s : samples) {
    if (s.features.size() != d) {
      throw ValidationError("sample '" + s.id + "' has dimension " +
                            std::to_string(s.features.size()) + ", expected " + std::to_string(d));
    }
    for (double v : s.features) {
      if (!std::isfinite(v)) throw ValidationError("sample '" + s.id + "' has a non-finite feature");
    }
    if (s.label < 0 || s.label >= kNumLabels) {
      throw ValidationError("sample '" + s.id + "' label outside 0..4");
    }
    if (s.binary != 0 && s.binary != 1) {
      throw ValidationError("sample '" + s.id + "' binary target not 0/1");
    }
  }
  return d;
}

Dataset Dataset::subset(const std::vector<std::string>& ids) const {
  std::map<std::string_view, const Sample*> by_id;
  for (const auto& s : samples) by_id[s.id] = &s;
  Dataset out;
  out.samples.reserve(ids.size());
  for (const auto& id : ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw NotFoundError("no features for posting '" + id + "'");
    out.samples.push_back(*it->second);
  }
  return out;
}

Dense Dense::zeros(std::size_t in, std::size_t out) {
  Dense d;
  d.in = in;
  d.out = out;
  d.weight.assign(in * out, 0.0);
  d.bias.assign(out, 0.0);
  return d;
}

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::Bin: return "bin";
    case ModelKind::Multi: return "multi";
    case ModelKind::Coral: return "coral";
    case ModelKind::BinMulti: return "bin_multi";
    case ModelKind::BinCoral: return "bin_coral";
  }
  return "unknown";
}

ModelKind parse_model_kind(std::string_view text) {
  for (auto kind : {ModelKind::Bin, ModelKind::Multi, ModelKind::Coral, ModelKind::BinMulti,
                    ModelKind::BinCoral}) {
    if (to_string(kind) == text) return kind;
  }
  throw ValidationError("unknown model kind '" + std::string(text) +
                        "' (expected bin, multi, coral, bin_multi or bin_coral)");
}

std::string_view display_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::Bin: return "Bin";
    case ModelKind::Multi: return "Multi";
    case ModelKind::Coral: return "Coral";
    case ModelKind::BinMulti: return "BinMulti";
    case ModelKind::BinCoral: return "BinCoral";
  }
  return "unknown";
}

std::string_view to_string(HeadKind head) {
  switch (head) {
    case HeadKind::Binary: return "binary";
    case HeadKind::Multiclass: return "multiclass";
    case HeadKind::Coral: return "coral";
  }
  return "unknown";
}

std::vector<HeadKind> heads_of(ModelKind kind) {
  std::vector<HeadKind> heads;
  if (has_binary(kind)) heads.push_back(HeadKind::Binary);
  if (has_multi(kind)) heads.push_back(HeadKind::Multiclass);
  if (has_coral(kind)) heads.push_back(HeadKind::Coral);
  return heads;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  auto dense = [&](const Dense& d) { n += d.weight.size() + d.bias.size(); };
  if (binary) {
    dense(binary->hidden);
    dense(binary->output);
  }
  if (multi) {
    dense(multi->hidden);
    dense(multi->output);
  }
  if (coral) {
    dense(coral->hidden);
    dense(coral->score);
    n += kNumThresholds;
  }
  return n;
}

Model zero_model(ModelKind kind, std::size_t input_dim, std::size_t hidden_dim) {
  if (input_dim == 0 || hidden_dim == 0) throw ValidationError("model dimensions must be positive");
  Model m;
  m.kind = kind;
  m.input_dim = input_dim;
  m.hidden_dim = hidden_dim;
  if (has_binary(kind)) {
    m.binary = BinaryHead{Dense::zeros(input_dim, hidden_dim), Dense::zeros(hidden_dim, 1)};
  }
  if (has_multi(kind)) {
    m.multi = MulticlassHead{Dense::zeros(input_dim, hidden_dim),
                             Dense::zeros(hidden_dim, kNumLabels)};
  }
  if (has_coral(kind)) {
    m.coral = CoralHead{Dense::zeros(input_dim, hidden_dim), Dense::zeros(hidden_dim, 1), {}};
  }
  return m;
}

Model init_model(ModelKind kind, std::size_t input_dim, std::size_t hidden_dim,
                 std::uint64_t seed) {
  Model m = zero_model(kind, input_dim, hidden_dim);
  if (m.binary) {
    Rng rng(derive_seed(seed, kBinaryStream));
    m.binary->hidden = random_dense(input_dim, hidden_dim, rng);
    m.binary->output = random_dense(hidden_dim, 1, rng);
  }
  if (m.multi) {
    Rng rng(derive_seed(seed, kMultiStream));
    m.multi->hidden = random_dense(input_dim, hidden_dim, rng);
    m.multi->output = random_dense(hidden_dim, kNumLabels, rng);
  }
  if (m.coral) {
    Rng rng(derive_seed(seed, kCoralStream));
    m.coral->hidden = random_dense(input_dim, hidden_dim, rng);
    m.coral->score = random_dense(hidden_dim, 1, rng);
  }
  return m;
}

std::vector<ParamBlock> parameter_blocks(Model& model) {
  std::vector<ParamBlock> blocks;
  if (model.binary) {
    visit_dense(model.binary->hidden, blocks);
    visit_dense(model.binary->output, blocks);
  }
  if (model.multi) {
    visit_dense(model.multi->hidden, blocks);
    visit_dense(model.multi->output, blocks);
  }
  if (model.coral) {
    visit_dense(model.coral->hidden, blocks);
    visit_dense(model.coral->score, blocks);
    blocks.push_back({std::span<double>(model.coral->thresholds), false});
  }
  return blocks;
}

// ---------------------------------------------------------------------------
// Numerics

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

CoralOutput coral_forward(const CoralHead& head, std::span<const double> x) {
  if (x.size() != head.hidden.in) throw ValidationError("feature dimension mismatch");
  HiddenState s;
  auto out = coral_head_forward(head, x, s);
  require_finite(out.score, "coral activation");
  return out;
}

double coral_loss(std::span<const double> logits, Label y) {
  if (logits.size() != kNumThresholds) throw ValidationError("coral loss needs 4 logits");
  double loss = 0.0;
  for (int k = 0; k < kNumThresholds; ++k) {
    // -log sigmoid(z) = softplus(-z); -log(1 - sigmoid(z)) = softplus(z)
    loss += y.value() > k ? softplus(-logits[k]) : softplus(logits[k]);
  }
  return loss;
}

Label coral_decode(std::span<const double> probabilities) {
  int count = 0;
  for (double p : probabilities) count += p > 0.5 ? 1 : 0;
  return Label(std::min(count, kNumLabels - 1));
}

double binary_logit(const BinaryHead& head, std::span<const double> x) {
  if (x.size() != head.hidden.in) throw ValidationError("feature dimension mismatch");
  HiddenState s;
  return binary_head_logit(head, x, s);
}

double binary_loss(double logit, int y) { return y == 1 ? softplus(-logit) : softplus(logit); }

int binary_decode(double logit) { return sigmoid(logit) > 0.5 ? 1 : 0; }

std::vector<double> multiclass_logits(const MulticlassHead& head, std::span<const double> x) {
  if (x.size() != head.hidden.in) throw ValidationError("feature dimension mismatch");
  HiddenState s;
  return multi_head_logits(head, x, s);
}

double multiclass_loss(std::span<const double> logits, Label y) {
  return log_sum_exp(logits) - logits[y.value()];
}

Label multiclass_decode(std::span<const double> logits) {
  return Label(static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin()));
}

double sample_loss(const Model& model, const Sample& sample) {
  check_dim(model, sample.features);
  const bool dual = is_dual(model.kind);
  const double w_bin = dual ? model.lambda_bin : 1.0;
  const double w_ord = dual ? model.lambda_ord : 1.0;
  const Label y(sample.label);
  double loss = 0.0;
  HiddenState s;
  if (model.binary) loss += w_bin * binary_loss(binary_head_logit(*model.binary, sample.features, s), sample.binary);
  if (model.multi) loss += w_ord * multiclass_loss(multi_head_logits(*model.multi, sample.features, s), y);
  if (model.coral) loss += w_ord * coral_loss(coral_head_forward(*model.coral, sample.features, s).logits, y);
  return loss;
}

double dual_loss(const Model& model, std::span<const double> x, Label y) {
  Sample s;
  s.features.assign(x.begin(), x.end());
  s.label = y.value();
  s.binary = binarize(y);
  return sample_loss(model, s);
}

double loss_and_gradient(const Model& model, std::span<const Sample* const> batch, Model& grad) {
  if (batch.empty()) return 0.0;
  const bool dual = is_dual(model.kind);
  const double scale = 1.0 / static_cast<double>(batch.size());
  const double w_bin = (dual ? model.lambda_bin : 1.0) * scale;
  const double w_ord = (dual ? model.lambda_ord : 1.0) * scale;
  double total = 0.0;
  HiddenState s;
  std::vector<double> dout;
  for (const Sample* sample : batch) {
    check_dim(model, sample->features);
    const std::span<const double> x(sample->features);
    const Label y(sample->label);
    if (model.binary) {
      const double z = binary_head_logit(*model.binary, x, s);
      total += w_bin * binary_loss(z, sample->binary);
      dout.assign(1, w_bin * (sigmoid(z) - sample->binary));
      head_backward(model.binary->hidden, model.binary->output, x, s, dout, grad.binary->hidden,
                    grad.binary->output);
    }
    if (model.multi) {
      const auto z = multi_head_logits(*model.multi, x, s);
      total += w_ord * multiclass_loss(z, y);
      const double lse = log_sum_exp(z);
      dout.resize(z.size());
      for (std::size_t c = 0; c < z.size(); ++c) {
        const double target = static_cast<int>(c) == y.value() ? 1.0 : 0.0;
        dout[c] = w_ord * (std::exp(z[c] - lse) - target);
      }
      head_backward(model.multi->hidden, model.multi->output, x, s, dout, grad.multi->hidden,
                    grad.multi->output);
    }
    if (model.coral) {
      const auto out = coral_head_forward(*model.coral, x, s);
      total += w_ord * coral_loss(out.logits, y);
      double dscore = 0.0;
      for (int k = 0; k < kNumThresholds; ++k) {
        const double target = y.value() > k ? 1.0 : 0.0;
        const double dz = w_ord * (out.probabilities[k] - target);
        grad.coral->thresholds[k] += dz;
        dscore += dz;
      }
      dout.assign(1, dscore);
      head_backward(model.coral->hidden, model.coral->score, x, s, dout, grad.coral->hidden,
                    grad.coral->score);
    }
  }
  return total;
}

Prediction predict(const Model& model, std::span<const double> x) {
  check_dim(model, x);
  Prediction p;
  HiddenState s;
  if (model.binary) p.binary = binary_decode(binary_head_logit(*model.binary, x, s));
  if (model.multi) p.label = multiclass_decode(multi_head_logits(*model.multi, x, s)).value();
  if (model.coral) p.label = coral_decode(coral_head_forward(*model.coral, x, s).probabilities).value();
  return p;
}

double positive_probability(const Model& model, std::span<const double> x) {
  check_dim(model, x);
  HiddenState s;
  if (model.binary) return sigmoid(binary_head_logit(*model.binary, x, s));
  if (model.coral) return coral_head_forward(*model.coral, x, s).probabilities[0];
  const auto z = multi_head_logits(*model.multi, x, s);
  return 1.0 - std::exp(z[0] - log_sum_exp(z));
}

// ---------------------------------------------------------------------------
// Training

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be positive");
  if (batch_size == 0) throw ValidationError("batch_size must be positive");
  if (hidden_dim == 0) throw ValidationError("hidden_dim must be positive");
  if (weight_decay < 0.0) throw ValidationError("weight_decay must be non-negative");
  if (lambda_bin < 0.0 || lambda_ord < 0.0) throw ValidationError("loss weights must be non-negative");
}

double learning_rate_at(const TrainConfig& config, std::size_t step, std::size_t total_steps) {
  const std::size_t warmup = std::min(config.warmup_steps, total_steps);
  if (step < warmup) {
    return config.learning_rate * static_cast<double>(step) / static_cast<double>(warmup);
  }
  return config.learning_rate;
}

TrainResult train(const Dataset& data, ModelKind kind, const TrainConfig& config,
                  const Dataset* dev) {
  config.validate();
  const std::size_t dim = data.dimension();
  const bool use_dev = dev != nullptr && !dev->empty();
  if (use_dev && dev->dimension() != dim) throw ValidationError("dev set dimension mismatch");

  TrainResult result;
  result.model = init_model(kind, dim, config.hidden_dim, config.seed);
  result.model.lambda_bin = config.lambda_bin;
  result.model.lambda_ord = config.lambda_ord;
  Model& model = result.model;

  Model grad = zero_model(kind, dim, config.hidden_dim);
  auto params = parameter_blocks(model);
  auto grads = parameter_blocks(grad);
  std::vector<std::vector<double>> m1(params.size());
  std::vector<std::vector<double>> m2(params.size());
  for (std::size_t b = 0; b < params.size(); ++b) {
    m1[b].assign(params[b].values.size(), 0.0);
    m2[b].assign(params[b].values.size(), 0.0);
  }

  const std::size_t batches_per_epoch = (data.size() + config.batch_size - 1) / config.batch_size;
  const std::size_t total_steps = batches_per_epoch * config.epochs;
  const auto heads = heads_of(kind);

  std::vector<const Sample*> order;
  order.reserve(data.size());
  for (const auto& s : data.samples) order.push_back(&s);
  Rng shuffle_rng(derive_seed(config.seed, kShuffleStream));

  std::optional<Model> best;
  double best_score = -1.0;
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < batches_per_epoch; ++b) {
      const std::size_t begin = b * config.batch_size;
      const std::size_t end = std::min(begin + config.batch_size, order.size());
      const std::span<const Sample* const> batch(order.data() + begin, end - begin);

      for (auto& block : grads) std::fill(block.values.begin(), block.values.end(), 0.0);
      const double loss = loss_and_gradient(model, batch, grad);
      if (!std::isfinite(loss)) {
        throw TrainingError("non-finite loss at step " + std::to_string(step) + " (epoch " +
                            std::to_string(epoch) + ", batch " + std::to_string(b) + ")");
      }
      epoch_loss += loss * static_cast<double>(batch.size());

      const double lr = learning_rate_at(config, step, total_steps);
      ++step;
      const double correction1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
      const double correction2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
      for (std::size_t blk = 0; blk < params.size(); ++blk) {
        auto values = params[blk].values;
        const auto g = grads[blk].values;
        auto& mean = m1[blk];
        auto& var = m2[blk];
        const double decay = params[blk].decays ? config.weight_decay : 0.0;
        for (std::size_t i = 0; i < values.size(); ++i) {
          mean[i] = config.beta1 * mean[i] + (1.0 - config.beta1) * g[i];
          var[i] = config.beta2 * var[i] + (1.0 - config.beta2) * g[i] * g[i];
          const double update =
              (mean[i] / correction1) / (std::sqrt(var[i] / correction2) + config.adam_epsilon);
          values[i] -= lr * (update + decay * values[i]);
        }
      }
    }
    result.loss_history.push_back(epoch_loss / static_cast<double>(data.size()));

    if (use_dev) {
      double score = 0.0;
      for (HeadKind head : heads) score += evaluate(model, *dev, head).f1_macro;
      score /= static_cast<double>(heads.size());
      result.dev_f1_history.push_back(score);
      if (score > best_score) {
        best_score = score;
        best = model;
        result.best_epoch = epoch;
      }
    } else {
      result.best_epoch = epoch;
    }
  }
  if (best) result.model = std::move(*best);
  return result;
}

double grad_check(const Model& model, std::span<const Sample> samples, double h) {
  if (samples.empty()) throw ValidationError("grad check needs at least one sample");
  std::vector<const Sample*> batch;
  for (const auto& s : samples) batch.push_back(&s);

  Model grad = zero_model(model.kind, model.input_dim, model.hidden_dim);
  loss_and_gradient(model, batch, grad);

  auto mean_loss = [&](const Model& m) {
    double sum = 0.0;
    for (const auto& s : samples) sum += sample_loss(m, s);
    return sum / static_cast<double>(samples.size());
  };

  Model probe = model;
  auto params = parameter_blocks(probe);
  auto grads = parameter_blocks(grad);
  double worst = 0.0;
  for (std::size_t b = 0; b < params.size(); ++b) {
    for (std::size_t i = 0; i < params[b].values.size(); ++i) {
      double& p = params[b].values[i];
      const double saved = p;
      p = saved + h;
      const double up = mean_loss(probe);
      p = saved - h;
      const double down = mean_loss(probe);
      p = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = grads[b].values[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
      worst = std::max(worst, std::abs(analytic - numeric) / denom);
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Evaluation

EvalScores score_predictions(std::span<const int> gold, std::span<const int> predicted) {
  if (gold.empty() || gold.size() != predicted.size()) {
    throw ValidationError("gold and predictions must be non-empty and equally long");
  }
  std::set<int> classes(gold.begin(), gold.end());
  std::size_t correct = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) correct += gold[i] == predicted[i] ? 1 : 0;
  double f1_sum = 0.0;
  for (int c : classes) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
      if (predicted[i] == c && gold[i] == c) ++tp;
      else if (predicted[i] == c) ++fp;
      else if (gold[i] == c) ++fn;
    }
    f1_sum += 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
  }
  return {static_cast<double>(correct) / static_cast<double>(gold.size()),
          f1_sum / static_cast<double>(classes.size())};
}

EvalScores evaluate(const Model& model, const Dataset& data, HeadKind head) {
  if (data.empty()) throw ValidationError("cannot evaluate on an empty dataset");
  const auto heads = heads_of(model.kind);
  if (std::find(heads.begin(), heads.end(), head) == heads.end()) {
    throw ValidationError(std::string("model has no ") + std::string(to_string(head)) + " head");
  }
  std::vector<int> gold;
  std::vector<int> pred;
  gold.reserve(data.size());
  pred.reserve(data.size());
  for (const auto& s : data.samples) {
    gold.push_back(gold_for(s, head));
    pred.push_back(predicted_for(predict(model, s.features), head));
  }
  return score_predictions(gold, pred);
}

std::pair<double, double> mean_std(std::span<const double> values) {
  if (values.empty()) return {0.0, 0.0};
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  if (values.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(values.size() - 1))};
}

CvReport cross_validate(const Dataset& data, ModelKind kind, const TrainConfig& config,
                        const FoldPlan& plan) {
  config.validate();
  data.dimension();
  struct FoldOutcome {
    std::vector<EvalScores> scores;  // per head
    std::size_t best_epoch = 0;
  };
  const auto heads = heads_of(kind);

  auto run_fold = [&](std::size_t fold) {
    try {
      const Dataset train_set = data.subset(plan.train_ids(fold));
      const Dataset dev_set = data.subset(plan.dev_ids_of(fold));
      const Dataset test_set = data.subset(plan.test_ids(fold));
      if (train_set.empty() || test_set.empty()) {
        throw ValidationError("empty train or test split");
      }
      TrainConfig fold_config = config;
      fold_config.seed = derive_seed(config.seed, 1000 + fold);
      const auto trained = train(train_set, kind, fold_config, &dev_set);
      FoldOutcome outcome;
      outcome.best_epoch = trained.best_epoch;
      for (HeadKind head : heads) outcome.scores.push_back(evaluate(trained.model, test_set, head));
      return outcome;
    } catch (const TrainingError& e) {
      throw TrainingError("fold " + std::to_string(fold) + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError("fold " + std::to_string(fold) + ": " + e.what());
    }
  };

  std::vector<FoldOutcome> outcomes;
  if (config.parallel_folds) {
    std::vector<std::future<FoldOutcome>> futures;
    for (std::size_t f = 0; f < plan.k; ++f) futures.push_back(std::async(std::launch::async, run_fold, f));
    for (auto& fut : futures) outcomes.push_back(fut.get());
  } else {
    for (std::size_t f = 0; f < plan.k; ++f) outcomes.push_back(run_fold(f));
  }

  CvReport report;
  report.kind = kind;
  for (const auto& o : outcomes) report.best_epochs.push_back(o.best_epoch);
  for (std::size_t h = 0; h < heads.size(); ++h) {
    EvalResult r;
    r.head = heads[h];
    for (const auto& o : outcomes) {
      r.accuracy.push_back(o.scores[h].accuracy);
      r.f1_macro.push_back(o.scores[h].f1_macro);
    }
    std::tie(r.accuracy_mean, r.accuracy_std) = mean_std(r.accuracy);
    std::tie(r.f1_macro_mean, r.f1_macro_std) = mean_std(r.f1_macro);
    report.heads.push_back(std::move(r));
  }
  return report;
}

std::string cv_report_tsv(const std::vector<CvReport>& reports) {
  std::string out = "model\thead\taccuracy_mean\taccuracy_std\tf1_macro_mean\tf1_macro_std\n";
  for (const auto& report : reports) {
    for (const auto& r : report.heads) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "%s\t%s\t%.4f\t%.4f\t%.4f\t%.4f\n",
                    std::string(display_name(report.kind)).c_str(),
                    std::string(to_string(r.head)).c_str(), r.accuracy_mean, r.accuracy_std,
                    r.f1_macro_mean, r.f1_macro_std);
      out += buf;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

nlohmann::json model_to_json(const Model& model) {
  nlohmann::json heads = nlohmann::json::object();
  if (model.binary) {
    heads["binary"] = {{"hidden", dense_to_json(model.binary->hidden)},
                       {"output", dense_to_json(model.binary->output)}};
  }
  if (model.multi) {
    heads["multiclass"] = {{"hidden", dense_to_json(model.multi->hidden)},
                           {"output", dense_to_json(model.multi->output)}};
  }
  if (model.coral) {
    heads["coral"] = {{"hidden", dense_to_json(model.coral->hidden)},
                      {"score", dense_to_json(model.coral->score)},
                      {"thresholds", model.coral->thresholds}};
  }
  return nlohmann::json{{"schema_version", kCheckpointSchemaVersion},
                        {"kind", to_string(model.kind)},
                        {"input_dim", model.input_dim},
                        {"hidden_dim", model.hidden_dim},
                        {"lambda_bin", model.lambda_bin},
                        {"lambda_ord", model.lambda_ord},
                        {"heads", std::move(heads)}};
}

Model model_from_json(const nlohmann::json& j) {
  try {
    const int version = j.at("schema_version").get<int>();
    if (version < 1 || version > kCheckpointSchemaVersion) {
      throw ValidationError("unsupported checkpoint schema_version " + std::to_string(version));
    }
    Model m = zero_model(parse_model_kind(j.at("kind").get<std::string>()),
                         j.at("input_dim").get<std::size_t>(), j.at("hidden_dim").get<std::size_t>());
    m.lambda_bin = j.value("lambda_bin", 1.0);
    m.lambda_ord = j.value("lambda_ord", 1.0);
    const auto& heads = j.at("heads");
    if (m.binary) {
      m.binary->hidden = dense_from_json(heads.at("binary").at("hidden"));
      m.binary->output = dense_from_json(heads.at("binary").at("output"));
    }
    if (m.multi) {
      m.multi->hidden = dense_from_json(heads.at("multiclass").at("hidden"));
      m.multi->output = dense_from_json(heads.at("multiclass").at("output"));
    }
    if (m.coral) {
      m.coral->hidden = dense_from_json(heads.at("coral").at("hidden"));
      m.coral->score = dense_from_json(heads.at("coral").at("score"));
      m.coral->thresholds =
          heads.at("coral").at("thresholds").get<std::array<double, kNumThresholds>>();
    }
    const Model reference = zero_model(m.kind, m.input_dim, m.hidden_dim);
    if (m.parameter_count() != reference.parameter_count()) {
      throw ValidationError("checkpoint layer shapes do not match its dimensions");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed checkpoint: ") + e.what());
  }
}

}  // namespace modlab

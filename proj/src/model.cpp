#include "agesel/model.hpp"

#include <algorithm>
#include <cmath>

#include "agesel/error.hpp"
#include "agesel/random.hpp"

namespace agesel {

bool ParamVector::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

double ParamVector::squared_norm() const noexcept {
  double s = 0.0;
  for (double v : values_) s += v * v;
  return s;
}

double ParamVector::norm() const noexcept { return std::sqrt(squared_norm()); }

void ParamVector::axpy(double scale, const ParamVector& other) {
  if (other.size() != size()) {
    throw ConfigError("ParamVector::axpy: dimension mismatch");
  }
  for (std::size_t i = 0; i < values_.size(); ++i) {
    values_[i] += scale * other.values_[i];
  }
}

double distance(const ParamVector& a, const ParamVector& b) {
  if (a.size() != b.size()) {
    throw ConfigError("distance: dimension mismatch");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    s += diff * diff;
  }
  return std::sqrt(s);
}

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::LogisticRegression:
      return "logistic_regression";
    case ModelKind::TwoLayerFC:
      return "two_layer_fc";
  }
  return "unknown";
}

ModelKind model_kind_from_string(std::string_view name) {
  if (name == "logistic_regression" || name == "logreg") return ModelKind::LogisticRegression;
  if (name == "two_layer_fc" || name == "mlp") return ModelKind::TwoLayerFC;
  throw ConfigError("unknown model kind: " + std::string(name));
}

std::size_t ModelSpec::param_count() const {
  const std::size_t f = input_dim;
  const std::size_t k = num_classes;
  switch (kind) {
    case ModelKind::LogisticRegression:
      return (f + 1) * k;
    case ModelKind::TwoLayerFC:
      return (f + 1) * hidden_dim + (hidden_dim + 1) * k;
  }
  return 0;
}

void ModelSpec::validate() const {
  if (input_dim == 0) throw ConfigError("model: input_dim must be positive");
  if (num_classes < 2) throw ConfigError("model: num_classes must be at least 2");
  if (kind == ModelKind::TwoLayerFC && hidden_dim == 0) {
    throw ConfigError("model: hidden_dim must be positive for two_layer_fc");
  }
}

namespace {

void glorot_fill(std::span<double> weights, std::size_t fan_in, std::size_t fan_out, RandomStream& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& w : weights) {
    w = rng.uniform(-limit, limit);
  }
}

void check_batch(const ParamVector& params, const ModelSpec& spec, std::span<const Sample> batch) {
  if (params.size() != spec.param_count()) {
    throw ConfigError("parameter dimension " + std::to_string(params.size()) + " does not match model (" +
                      std::to_string(spec.param_count()) + ")");
  }
  if (batch.empty()) {
    throw ConfigError("empty batch");
  }
  for (const Sample& s : batch) {
    if (s.features.size() != spec.input_dim) {
      throw ConfigError("feature dimension mismatch");
    }
    if (s.label < 0 || static_cast<std::size_t>(s.label) >= spec.num_classes) {
      throw ConfigError("label out of range");
    }
  }
}

// Forward/backward for one sample; buffers are reused across the batch.
class Evaluator {
 public:
  Evaluator(const ParamVector& params, const ModelSpec& spec) : p_(params.values()), spec_(spec) {
    logits_.resize(spec.num_classes);
    if (spec.kind == ModelKind::TwoLayerFC) {
      hidden_.resize(spec.hidden_dim);
      dhidden_.resize(spec.hidden_dim);
    }
  }

  const std::vector<double>& forward(std::span<const double> x) {
    const std::size_t f = spec_.input_dim;
    const std::size_t k = spec_.num_classes;
    if (spec_.kind == ModelKind::LogisticRegression) {
      affine(p_.subspan(0, k * f), p_.subspan(k * f, k), x, logits_);
      return logits_;
    }
    const std::size_t h = spec_.hidden_dim;
    const std::size_t w2 = h * f + h;
    affine(p_.subspan(0, h * f), p_.subspan(h * f, h), x, hidden_);
    for (double& a : hidden_) a = a > 0.0 ? a : 0.0;
    affine(p_.subspan(w2, k * h), p_.subspan(w2 + k * h, k), hidden_, logits_);
    return logits_;
  }

  // Cross-entropy of the last forward pass; turns logits_ into softmax - onehot.
  double cross_entropy_and_delta(int label) {
    const double mx = *std::max_element(logits_.begin(), logits_.end());
    double sum = 0.0;
    for (double z : logits_) sum += std::exp(z - mx);
    const double log_z = mx + std::log(sum);
    const double ce = log_z - logits_[static_cast<std::size_t>(label)];
    for (double& z : logits_) z = std::exp(z - log_z);
    logits_[static_cast<std::size_t>(label)] -= 1.0;
    return ce;
  }

  // Accumulates d(ce)/d(params) for input x into grad, using the delta
  // left in logits_ by cross_entropy_and_delta().
  void backward(std::span<const double> x, std::span<double> grad) {
    const std::size_t f = spec_.input_dim;
    const std::size_t k = spec_.num_classes;
    if (spec_.kind == ModelKind::LogisticRegression) {
      outer_accumulate(logits_, x, grad.subspan(0, k * f), grad.subspan(k * f, k));
      return;
    }
    const std::size_t h = spec_.hidden_dim;
    const std::size_t w2 = h * f + h;
    outer_accumulate(logits_, hidden_, grad.subspan(w2, k * h), grad.subspan(w2 + k * h, k));
    const auto W2 = p_.subspan(w2, k * h);
    std::fill(dhidden_.begin(), dhidden_.end(), 0.0);
    for (std::size_t c = 0; c < k; ++c) {
      const double d = logits_[c];
      const double* row = W2.data() + c * h;
      for (std::size_t j = 0; j < h; ++j) dhidden_[j] += d * row[j];
    }
    // ReLU gate; hidden_ holds post-activation values, zero exactly when inactive.
    for (std::size_t j = 0; j < h; ++j) {
      if (!(hidden_[j] > 0.0)) dhidden_[j] = 0.0;
    }
    outer_accumulate(dhidden_, x, grad.subspan(0, h * f), grad.subspan(h * f, h));
  }

 private:
  static void affine(std::span<const double> W, std::span<const double> b, std::span<const double> x,
                     std::vector<double>& out) {
    const std::size_t n_in = x.size();
    for (std::size_t r = 0; r < out.size(); ++r) {
      const double* row = W.data() + r * n_in;
      double acc = b[r];
      for (std::size_t i = 0; i < n_in; ++i) acc += row[i] * x[i];
      out[r] = acc;
    }
  }

  static void outer_accumulate(std::span<const double> delta, std::span<const double> x, std::span<double> gW,
                               std::span<double> gb) {
    const std::size_t n_in = x.size();
    for (std::size_t r = 0; r < delta.size(); ++r) {
      const double d = delta[r];
      if (d == 0.0) continue;
      double* row = gW.data() + r * n_in;
      for (std::size_t i = 0; i < n_in; ++i) row[i] += d * x[i];
      gb[r] += d;
    }
  }

  std::span<const double> p_;
  const ModelSpec& spec_;
  std::vector<double> logits_;
  std::vector<double> hidden_;
  std::vector<double> dhidden_;
};

}  // namespace

ParamVector init_params(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  ParamVector params(spec.param_count(), 0.0);
  RandomStream rng = RandomStream(seed).derive(StreamPurpose::kInit);
  auto v = params.values();
  const std::size_t f = spec.input_dim;
  const std::size_t k = spec.num_classes;
  if (spec.kind == ModelKind::LogisticRegression) {
    glorot_fill(v.subspan(0, k * f), f, k, rng);
  } else {
    const std::size_t h = spec.hidden_dim;
    glorot_fill(v.subspan(0, h * f), f, h, rng);
    glorot_fill(v.subspan(h * f + h, k * h), h, k, rng);
  }
  return params;
}

std::vector<std::size_t> bias_indices(const ModelSpec& spec) {
  std::vector<std::size_t> idx;
  const std::size_t f = spec.input_dim;
  const std::size_t k = spec.num_classes;
  if (spec.kind == ModelKind::LogisticRegression) {
    for (std::size_t c = 0; c < k; ++c) idx.push_back(k * f + c);
  } else {
    const std::size_t h = spec.hidden_dim;
    for (std::size_t j = 0; j < h; ++j) idx.push_back(h * f + j);
    const std::size_t b2 = h * f + h + k * h;
    for (std::size_t c = 0; c < k; ++c) idx.push_back(b2 + c);
  }
  return idx;
}

double loss_and_gradient(const ParamVector& params, const ModelSpec& spec, std::span<const Sample> batch,
                         ParamVector& grad) {
  check_batch(params, spec, batch);
  grad = ParamVector(params.size(), 0.0);
  Evaluator eval(params, spec);
  double total = 0.0;
  for (const Sample& s : batch) {
    eval.forward(s.features);
    total += eval.cross_entropy_and_delta(s.label);
    eval.backward(s.features, grad.values());
  }
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  for (double& g : grad.values()) g *= inv_b;
  const double mean = total * inv_b;
  if (!std::isfinite(mean) || !grad.all_finite()) {
    throw NumericError("loss/gradient evaluation produced a non-finite value");
  }
  return mean;
}

double loss(const ParamVector& params, const ModelSpec& spec, std::span<const Sample> batch) {
  check_batch(params, spec, batch);
  Evaluator eval(params, spec);
  double total = 0.0;
  for (const Sample& s : batch) {
    eval.forward(s.features);
    total += eval.cross_entropy_and_delta(s.label);
  }
  const double mean = total / static_cast<double>(batch.size());
  if (!std::isfinite(mean)) {
    throw NumericError("loss evaluation produced a non-finite value");
  }
  return mean;
}

ParamVector minibatch_gradient(const ParamVector& params, const ModelSpec& spec, std::span<const Sample> batch) {
  ParamVector grad;
  loss_and_gradient(params, spec, batch, grad);
  return grad;
}

std::vector<double> class_scores(const ParamVector& params, const ModelSpec& spec, const Sample& sample) {
  if (params.size() != spec.param_count() || sample.features.size() != spec.input_dim) {
    throw ConfigError("class_scores: dimension mismatch");
  }
  Evaluator eval(params, spec);
  return eval.forward(sample.features);
}

double accuracy(const ParamVector& params, const ModelSpec& spec, std::span<const Sample> dataset) {
  check_batch(params, spec, dataset);
  Evaluator eval(params, spec);
  std::size_t correct = 0;
  for (const Sample& s : dataset) {
    const auto& scores = eval.forward(s.features);
    // max_element returns the first maximum, i.e. the smallest tied index.
    const auto best = static_cast<int>(std::max_element(scores.begin(), scores.end()) - scores.begin());
    if (best == s.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(dataset.size());
}

}  // namespace agesel

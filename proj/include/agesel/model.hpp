#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace agesel {

// Flat model parameter vector. Its length is fixed at construction.
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(std::size_t dim, double fill = 0.0) : values_(dim, fill) {}
  explicit ParamVector(std::vector<double> values) : values_(std::move(values)) {}

  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }
  const std::vector<double>& vec() const noexcept { return values_; }

  bool all_finite() const noexcept;
  double norm() const noexcept;
  double squared_norm() const noexcept;

  // this += scale * other
  void axpy(double scale, const ParamVector& other);

  friend bool operator==(const ParamVector&, const ParamVector&) = default;

 private:
  std::vector<double> values_;
};

double distance(const ParamVector& a, const ParamVector& b);

// Non-owning view of one labelled example. Feature storage is owned by the
// dataset the view came from.
struct Sample {
  std::span<const double> features;
  int label = 0;
};

enum class ModelKind { LogisticRegression, TwoLayerFC };

std::string_view to_string(ModelKind kind);
ModelKind model_kind_from_string(std::string_view name);

struct ModelSpec {
  ModelKind kind = ModelKind::LogisticRegression;
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;  // TwoLayerFC only
  std::size_t num_classes = 0;

  // LogisticRegression: (f+1)K. TwoLayerFC: (f+1)h + (h+1)K.
  std::size_t param_count() const;
  void validate() const;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

// Parameter layout:
//   LogisticRegression: W[K][f] then b[K].
//   TwoLayerFC:         W1[h][f], b1[h], W2[K][h], b2[K].
// Weights are Glorot-uniform per layer, biases zero.
ParamVector init_params(const ModelSpec& spec, std::uint64_t seed);

// Indices of the bias coordinates in the layout above.
std::vector<std::size_t> bias_indices(const ModelSpec& spec);

// Mean softmax cross-entropy over the batch.
double loss(const ParamVector& params, const ModelSpec& spec, std::span<const Sample> batch);

// Gradient of loss() with respect to params.
ParamVector minibatch_gradient(const ParamVector& params, const ModelSpec& spec, std::span<const Sample> batch);

// Loss and gradient in one pass.
double loss_and_gradient(const ParamVector& params, const ModelSpec& spec, std::span<const Sample> batch,
                         ParamVector& grad);

// Class scores (logits) for one sample.
std::vector<double> class_scores(const ParamVector& params, const ModelSpec& spec, const Sample& sample);

// Fraction of samples whose argmax score equals the label. Ties go to the
// smallest class index.
double accuracy(const ParamVector& params, const ModelSpec& spec, std::span<const Sample> dataset);

}  // namespace agesel

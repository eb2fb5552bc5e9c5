#include "agesel/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "agesel/error.hpp"

namespace agesel {

GlobalDataset::GlobalDataset(std::size_t num_classes, std::size_t feature_dim, std::vector<double> features,
                             std::vector<int> labels)
    : num_classes_(num_classes), feature_dim_(feature_dim), features_(std::move(features)), labels_(std::move(labels)) {
  if (feature_dim_ == 0) throw ConfigError("dataset: feature_dim must be positive");
  if (features_.size() != labels_.size() * feature_dim_) {
    throw ConfigError("dataset: feature matrix does not match label count");
  }
  for (int label : labels_) {
    if (label < 0 || static_cast<std::size_t>(label) >= num_classes_) {
      throw ConfigError("dataset: label " + std::to_string(label) + " outside [0, " + std::to_string(num_classes_) + ")");
    }
  }
}

std::vector<Sample> GlobalDataset::samples() const { return samples(0, size()); }

std::vector<Sample> GlobalDataset::samples(std::size_t begin, std::size_t end) const {
  std::vector<Sample> out;
  out.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) out.push_back(sample(i));
  return out;
}

DataShard::DataShard(int worker_id, std::shared_ptr<const GlobalDataset> source, std::size_t begin, std::size_t end,
                     double weight)
    : worker_id_(worker_id), source_(std::move(source)), begin_(begin), end_(end), weight_(weight) {
  if (!source_ || begin_ > end_ || end_ > source_->size()) {
    throw ConfigError("shard: invalid slice");
  }
}

std::vector<std::size_t> DataShard::label_histogram() const {
  std::vector<std::size_t> hist(source_->num_classes(), 0);
  const auto labels = source_->labels();
  for (std::size_t i = begin_; i < end_; ++i) ++hist[static_cast<std::size_t>(labels[i])];
  return hist;
}

std::size_t PartitionPlan::total() const { return std::accumulate(sizes.begin(), sizes.end(), std::size_t{0}); }

namespace {

std::vector<double> class_means(std::size_t num_classes, std::size_t feature_dim, std::uint64_t seed) {
  RandomStream rng = RandomStream(seed).derive(StreamPurpose::kDatasetMeans);
  std::vector<double> means(num_classes * feature_dim);
  for (double& m : means) m = rng.uniform(-1.0, 1.0);
  return means;
}

GlobalDataset draw_blobs(std::size_t num_classes, std::size_t feature_dim, std::size_t samples_per_class,
                         double spread, std::uint64_t seed, StreamPurpose noise_purpose) {
  if (num_classes == 0 || feature_dim == 0 || samples_per_class == 0) {
    throw ConfigError("generate_synthetic: counts must be positive");
  }
  if (!(spread >= 0.0) || !std::isfinite(spread)) {
    throw ConfigError("generate_synthetic: spread must be finite and non-negative");
  }
  const std::vector<double> means = class_means(num_classes, feature_dim, seed);
  RandomStream noise = RandomStream(seed).derive(noise_purpose);
  const std::size_t n = num_classes * samples_per_class;
  std::vector<double> features;
  features.reserve(n * feature_dim);
  std::vector<int> labels;
  labels.reserve(n);
  for (std::size_t k = 0; k < num_classes; ++k) {
    for (std::size_t s = 0; s < samples_per_class; ++s) {
      for (std::size_t i = 0; i < feature_dim; ++i) {
        const double mu = means[k * feature_dim + i];
        // Draw even when spread == 0 so the stream layout does not depend on it.
        const double z = noise.normal();
        features.push_back(spread == 0.0 ? mu : mu + spread * z);
      }
      labels.push_back(static_cast<int>(k));
    }
  }
  return GlobalDataset(num_classes, feature_dim, std::move(features), std::move(labels));
}

}  // namespace

GlobalDataset generate_synthetic(std::size_t num_classes, std::size_t feature_dim, std::size_t samples_per_class,
                                 double spread, std::uint64_t seed) {
  return draw_blobs(num_classes, feature_dim, samples_per_class, spread, seed, StreamPurpose::kDatasetTrain);
}

GlobalDataset generate_synthetic_eval(std::size_t num_classes, std::size_t feature_dim,
                                      std::size_t samples_per_class, double spread, std::uint64_t seed) {
  return draw_blobs(num_classes, feature_dim, samples_per_class, spread, seed, StreamPurpose::kDatasetEval);
}

PartitionPlan dirichlet_plan(std::size_t total, std::size_t num_workers, std::size_t min_size, double alpha,
                             RandomStream& rng) {
  if (num_workers == 0) throw ConfigError("partition: need at least one worker");
  if (min_size * num_workers > total) {
    throw ConfigError("partition: " + std::to_string(num_workers) + " workers with at least " +
                      std::to_string(min_size) + " samples each exceed N = " + std::to_string(total));
  }
  std::vector<double> w(num_workers);
  double sum = 0.0;
  for (double& x : w) {
    x = rng.gamma(alpha);
    sum += x;
  }
  const std::size_t spare = total - min_size * num_workers;
  PartitionPlan plan;
  plan.sizes.assign(num_workers, min_size);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t m = 0; m < num_workers; ++m) {
    const double share = sum > 0.0 ? static_cast<double>(spare) * w[m] / sum : 0.0;
    const auto whole = static_cast<std::size_t>(std::floor(share));
    plan.sizes[m] += whole;
    assigned += whole;
    remainders.emplace_back(share - static_cast<double>(whole), m);
  }
  // Largest remainder first; ties by lower worker id.
  std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  for (std::size_t i = 0; assigned < spare; ++i, ++assigned) {
    ++plan.sizes[remainders[i % num_workers].second];
  }
  return plan;
}

PartitionPlan equal_plan(std::size_t total, std::size_t num_workers) {
  if (num_workers == 0) throw ConfigError("partition: need at least one worker");
  PartitionPlan plan;
  plan.sizes.assign(num_workers, total / num_workers);
  for (std::size_t m = 0; m < total % num_workers; ++m) ++plan.sizes[m];
  return plan;
}

std::vector<DataShard> partition_label_sorted(const GlobalDataset& dataset, const PartitionPlan& plan) {
  if (plan.sizes.empty()) throw ConfigError("partition: empty plan");
  if (plan.total() != dataset.size()) {
    throw ConfigError("partition: plan sizes sum to " + std::to_string(plan.total()) + " but N = " +
                      std::to_string(dataset.size()));
  }
  for (std::size_t s : plan.sizes) {
    if (s == 0) throw ConfigError("partition: every shard must be non-empty");
  }
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto labels = dataset.labels();
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return labels[a] < labels[b]; });

  const std::size_t f = dataset.feature_dim();
  std::vector<double> features;
  features.reserve(dataset.size() * f);
  std::vector<int> sorted_labels;
  sorted_labels.reserve(dataset.size());
  const auto src = dataset.features();
  for (std::size_t i : order) {
    features.insert(features.end(), src.begin() + static_cast<std::ptrdiff_t>(i * f),
                    src.begin() + static_cast<std::ptrdiff_t>((i + 1) * f));
    sorted_labels.push_back(labels[i]);
  }
  auto sorted = std::make_shared<const GlobalDataset>(dataset.num_classes(), f, std::move(features),
                                                      std::move(sorted_labels));

  std::vector<DataShard> shards;
  shards.reserve(plan.sizes.size());
  const double n = static_cast<double>(dataset.size());
  std::size_t begin = 0;
  for (std::size_t m = 0; m < plan.sizes.size(); ++m) {
    const std::size_t end = begin + plan.sizes[m];
    shards.emplace_back(static_cast<int>(m), sorted, begin, end, static_cast<double>(plan.sizes[m]) / n);
    begin = end;
  }
  return shards;
}

std::vector<Sample> sample_minibatch(const DataShard& shard, std::size_t batch_size, RandomStream& rng) {
  if (shard.size() == 0) throw ConfigError("sample_minibatch: empty shard");
  if (batch_size == 0) throw ConfigError("sample_minibatch: batch size must be positive");
  std::vector<Sample> batch;
  batch.reserve(batch_size);
  for (std::size_t b = 0; b < batch_size; ++b) {
    batch.push_back(shard.sample(rng.uniform_index(shard.size())));
  }
  return batch;
}

std::vector<Sample> concat_samples(std::span<const DataShard> shards) {
  std::vector<Sample> out;
  for (const DataShard& s : shards) {
    for (std::size_t i = 0; i < s.size(); ++i) out.push_back(s.sample(i));
  }
  return out;
}

}  // namespace agesel

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "agesel/model.hpp"
#include "agesel/random.hpp"

namespace agesel {

// Owning labelled dataset stored as a dense row-major feature matrix.
class GlobalDataset {
 public:
  GlobalDataset() = default;
  GlobalDataset(std::size_t num_classes, std::size_t feature_dim, std::vector<double> features,
                std::vector<int> labels);

  std::size_t size() const noexcept { return labels_.size(); }
  std::size_t num_classes() const noexcept { return num_classes_; }
  std::size_t feature_dim() const noexcept { return feature_dim_; }

  Sample sample(std::size_t i) const {
    return Sample{std::span<const double>(features_).subspan(i * feature_dim_, feature_dim_), labels_[i]};
  }
  std::vector<Sample> samples() const;
  std::vector<Sample> samples(std::size_t begin, std::size_t end) const;

  std::span<const int> labels() const noexcept { return labels_; }
  std::span<const double> features() const noexcept { return features_; }

  friend bool operator==(const GlobalDataset&, const GlobalDataset&) = default;

 private:
  std::size_t num_classes_ = 0;
  std::size_t feature_dim_ = 0;
  std::vector<double> features_;
  std::vector<int> labels_;
};

// One worker's local data: a contiguous slice of a (label-sorted) dataset.
class DataShard {
 public:
  DataShard(int worker_id, std::shared_ptr<const GlobalDataset> source, std::size_t begin, std::size_t end,
            double weight);

  int worker_id() const noexcept { return worker_id_; }
  std::size_t size() const noexcept { return end_ - begin_; }
  double weight() const noexcept { return weight_; }
  std::size_t begin() const noexcept { return begin_; }
  std::size_t end() const noexcept { return end_; }
  const GlobalDataset& source() const noexcept { return *source_; }

  Sample sample(std::size_t i) const { return source_->sample(begin_ + i); }
  std::vector<Sample> samples() const { return source_->samples(begin_, end_); }

  // Count of samples per class, length num_classes.
  std::vector<std::size_t> label_histogram() const;

 private:
  int worker_id_;
  std::shared_ptr<const GlobalDataset> source_;
  std::size_t begin_;
  std::size_t end_;
  double weight_;
};

struct PartitionPlan {
  std::vector<std::size_t> sizes;

  std::size_t total() const;
  friend bool operator==(const PartitionPlan&, const PartitionPlan&) = default;
};

// Per-class Gaussian blobs: class k has a mean drawn from uniform([-1,1]^f) and
// isotropic noise with standard deviation `spread`. Samples come out sorted by
// label. The class means depend only on (num_classes, feature_dim, seed).
GlobalDataset generate_synthetic(std::size_t num_classes, std::size_t feature_dim, std::size_t samples_per_class,
                                 double spread, std::uint64_t seed);

// Held-out set from the same class means as generate_synthetic() with the same
// seed, drawn with independent noise.
GlobalDataset generate_synthetic_eval(std::size_t num_classes, std::size_t feature_dim,
                                      std::size_t samples_per_class, double spread, std::uint64_t seed);

// Shard sizes: every worker gets `min_size` samples, and the remaining
// N - M*min_size are split in proportion to a Dirichlet(alpha) draw using
// largest remainders.
PartitionPlan dirichlet_plan(std::size_t total, std::size_t num_workers, std::size_t min_size, double alpha,
                             RandomStream& rng);

PartitionPlan equal_plan(std::size_t total, std::size_t num_workers);

// Stable-sorts samples by label and hands out contiguous slices in worker order.
std::vector<DataShard> partition_label_sorted(const GlobalDataset& dataset, const PartitionPlan& plan);

// B uniform draws with replacement.
std::vector<Sample> sample_minibatch(const DataShard& shard, std::size_t batch_size, RandomStream& rng);

// All samples of all shards, in worker order.
std::vector<Sample> concat_samples(std::span<const DataShard> shards);

// Reads an IDX image file (magic 0x00000803) and label file (0x00000801), raw
// or gzip-compressed. Pixels are divided by 255. When num_classes is not
// given it is max(label) + 1.
GlobalDataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                       std::optional<std::size_t> num_classes = std::nullopt);

}  // namespace agesel

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "protomil/matrix.hpp"

namespace protomil {

// A labeled set of instances. Each row of `instances` is one instance of
// length L; row order is file order.
struct Bag {
  std::string id;
  int label = 0;
  Matrix instances;

  std::size_t size() const { return instances.rows(); }
  std::span<const double> instance(std::size_t k) const { return instances.row(k); }

  bool operator==(const Bag&) const = default;
};

// Immutable collection of bags sharing one feature width. Construction
// validates shape, label range, and finiteness.
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(std::vector<Bag> bags);

  const std::vector<Bag>& bags() const { return bags_; }
  const Bag& operator[](std::size_t i) const { return bags_[i]; }
  std::size_t size() const { return bags_.size(); }
  bool empty() const { return bags_.empty(); }
  std::size_t feature_count() const { return feature_count_; }
  std::size_t positive_count() const { return positive_count_; }
  std::size_t negative_count() const { return bags_.size() - positive_count_; }
  std::size_t instance_count() const;

  Dataset subset(std::span<const std::size_t> indices) const;

  bool operator==(const Dataset&) const = default;

 private:
  std::vector<Bag> bags_;
  std::size_t feature_count_ = 0;
  std::size_t positive_count_ = 0;
};

// Bag CSV: header `bag_id,label,f0,...,f{L-1}`, one instance per row. Rows
// sharing a bag_id form one bag; bags appear in order of first occurrence.
Dataset parse_csv(std::istream& in);
Dataset load_csv(const std::filesystem::path& path);
void write_csv(const Dataset& data, std::ostream& out);
void write_csv(const Dataset& data, const std::filesystem::path& path);

struct FoldSplit {
  std::vector<std::size_t> train_bag_indices;
  std::vector<std::size_t> test_bag_indices;
  std::size_t repeat_index = 0;
  std::size_t fold_index = 0;
};

// Repeated stratified k-fold. Returns repeats*k splits ordered by
// (repeat, fold). Each class is shuffled with a per-repeat substream of
// `seed` and dealt round-robin across folds, so per-class fold counts differ
// by at most one.
std::vector<FoldSplit> stratified_kfold(const Dataset& data, std::size_t k,
                                        std::size_t repeats, std::uint64_t seed);

struct SyntheticConfig {
  std::size_t n_bags = 100;
  std::size_t min_instances = 5;
  std::size_t max_instances = 15;
  std::size_t feature_count = 10;
  // Probability that an instance of a positive bag is a witness. At least one
  // witness is always planted.
  double witness_rate = 0.1;
  double separation = 8.0;
  std::uint64_t seed = 0;
};

// Background instances ~ N(0, I); witnesses ~ N(separation * e_0, I).
// floor(n_bags / 2) bags are positive, in shuffled positions.
Dataset gen_synthetic(const SyntheticConfig& config);

struct IdxImages {
  Matrix images;  // one flattened image per row, scaled to [0, 1]
  std::vector<int> labels;
  std::size_t image_rows = 0;
  std::size_t image_cols = 0;
};

IdxImages parse_idx(std::istream& images, std::istream& labels);
IdxImages load_idx_images(const std::filesystem::path& images_path,
                          const std::filesystem::path& labels_path);

struct DigitBagConfig {
  int target_digit = 9;
  std::size_t min_bag_size = 5;
  std::size_t max_bag_size = 15;
  std::size_t n_bags = 100;
  std::uint64_t seed = 0;
};

// Samples images without replacement into bags. Half the bags (rounded down)
// contain at least one target digit and are labeled 1; the rest contain none.
Dataset build_digit_bags(const IdxImages& pool, const DigitBagConfig& config);

// Per-feature z-scoring fitted on one dataset and applied to others. Features
// with zero spread are only centered.
class FeatureScaler {
 public:
  static FeatureScaler fit(const Dataset& data);
  Dataset apply(const Dataset& data) const;

  std::span<const double> mean() const { return mean_; }
  std::span<const double> stddev() const { return stddev_; }

 private:
  std::vector<double> mean_;
  std::vector<double> stddev_;
};

// Population mean and standard deviation of every column over all instances
// in `data`. Sums run over sorted values, so the result does not depend on
// instance or bag order.
void feature_moments(const Dataset& data, std::vector<double>& mean,
                     std::vector<double>& stddev);

}  // namespace protomil

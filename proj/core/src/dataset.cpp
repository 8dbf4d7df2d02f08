#include "protomil/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <string>
#include <unordered_map>

#include "protomil/error.hpp"
#include "protomil/rng.hpp"
#include "protomil/text.hpp"

namespace protomil {

Dataset::Dataset(std::vector<Bag> bags) : bags_(std::move(bags)) {
  if (bags_.empty()) return;
  feature_count_ = bags_.front().instances.cols();
  if (feature_count_ == 0) throw DataError("bags must have at least one feature");
  for (const Bag& bag : bags_) {
    if (bag.size() == 0) throw DataError("bag '" + bag.id + "' has no instances");
    if (bag.instances.cols() != feature_count_) {
      throw DataError("bag '" + bag.id + "' has " + std::to_string(bag.instances.cols()) +
                      " features, expected " + std::to_string(feature_count_));
    }
    if (bag.label != 0 && bag.label != 1) {
      throw DataError("bag '" + bag.id + "': label outside {0,1}");
    }
    for (double v : bag.instances.values()) {
      if (!std::isfinite(v)) throw DataError("bag '" + bag.id + "': non-finite feature");
    }
    positive_count_ += static_cast<std::size_t>(bag.label);
  }
}

std::size_t Dataset::instance_count() const {
  std::size_t n = 0;
  for (const Bag& bag : bags_) n += bag.size();
  return n;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  std::vector<Bag> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(bags_.at(i));
  return Dataset(std::move(out));
}

Dataset parse_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_fields(line);
  if (header.size() < 3 || header[0] != "bag_id" || header[1] != "label") {
    throw DataError("header must be bag_id,label,f0,...");
  }
  const std::size_t width = header.size() - 2;

  std::vector<Bag> bags;
  std::unordered_map<std::string, std::size_t> index;
  std::vector<double> row(width);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    const std::string where = "line " + std::to_string(line_no);
    if (fields.size() != header.size()) {
      throw DataError(where + ": ragged row (" + std::to_string(fields.size()) +
                      " fields, expected " + std::to_string(header.size()) + ")");
    }
    const double label_value = parse_double(fields[1], "label at " + where);
    if (label_value != 0.0 && label_value != 1.0) {
      throw DataError(where + ": label outside {0,1}");
    }
    const int label = static_cast<int>(label_value);
    for (std::size_t j = 0; j < width; ++j) {
      row[j] = parse_double(fields[j + 2], "feature at " + where);
      if (!std::isfinite(row[j])) throw DataError(where + ": non-finite feature");
    }
    std::string id(fields[0]);
    auto [it, inserted] = index.try_emplace(id, bags.size());
    if (inserted) {
      bags.push_back(Bag{id, label, Matrix(0, width)});
    } else if (bags[it->second].label != label) {
      throw DataError(where + ": conflicting labels for bag '" + id + "'");
    }
    bags[it->second].instances.append_row(row);
  }
  if (bags.empty()) throw DataError("empty file");
  return Dataset(std::move(bags));
}

Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("data file not found: " + path.string());
  return parse_csv(in);
}

void write_csv(const Dataset& data, std::ostream& out) {
  out << "bag_id,label";
  for (std::size_t j = 0; j < data.feature_count(); ++j) out << ",f" << j;
  out << '\n';
  for (const Bag& bag : data.bags()) {
    for (std::size_t k = 0; k < bag.size(); ++k) {
      out << bag.id << ',' << bag.label;
      for (double v : bag.instance(k)) out << ',' << format_double(v);
      out << '\n';
    }
  }
}

void write_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_csv(data, out);
}

std::vector<FoldSplit> stratified_kfold(const Dataset& data, std::size_t k,
                                        std::size_t repeats, std::uint64_t seed) {
  if (k < 2) throw UsageError("k must be at least 2");
  if (data.positive_count() < k || data.negative_count() < k) {
    throw UsageError("each class needs at least k=" + std::to_string(k) + " bags (have " +
                     std::to_string(data.positive_count()) + " positive, " +
                     std::to_string(data.negative_count()) + " negative)");
  }
  std::array<std::vector<std::size_t>, 2> by_class;
  for (std::size_t i = 0; i < data.size(); ++i) by_class[data[i].label].push_back(i);

  std::vector<FoldSplit> splits;
  splits.reserve(repeats * k);
  for (std::size_t r = 0; r < repeats; ++r) {
    Rng rng(derive_seed(seed, {stream::kFoldAssignment, r}));
    std::vector<std::size_t> fold_of(data.size());
    std::size_t offset = 0;
    // Positives first, then negatives continuing where positives stopped so
    // total fold sizes also stay within one of each other.
    for (int cls : {1, 0}) {
      std::vector<std::size_t> members = by_class[cls];
      std::shuffle(members.begin(), members.end(), rng);
      for (std::size_t i = 0; i < members.size(); ++i) {
        fold_of[members[i]] = (offset + i) % k;
      }
      offset = (offset + members.size()) % k;
    }
    for (std::size_t f = 0; f < k; ++f) {
      FoldSplit split;
      split.repeat_index = r;
      split.fold_index = f;
      for (std::size_t i = 0; i < data.size(); ++i) {
        (fold_of[i] == f ? split.test_bag_indices : split.train_bag_indices).push_back(i);
      }
      splits.push_back(std::move(split));
    }
  }
  return splits;
}

Dataset gen_synthetic(const SyntheticConfig& c) {
  if (c.n_bags < 2) throw UsageError("n_bags must be at least 2");
  if (c.feature_count < 1) throw UsageError("feature count must be at least 1");
  if (c.min_instances < 1 || c.max_instances < c.min_instances) {
    throw UsageError("instances per bag must satisfy 1 <= min <= max");
  }
  if (!(c.separation > 0.0)) throw UsageError("separation must be positive");
  if (!(c.witness_rate > 0.0 && c.witness_rate <= 1.0)) {
    throw UsageError("witness_rate must be in (0, 1]: a positive bag must contain a witness");
  }

  Rng rng(derive_seed(c.seed, {}));
  std::vector<int> labels(c.n_bags, 0);
  std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(c.n_bags / 2), 1);
  std::shuffle(labels.begin(), labels.end(), rng);

  std::uniform_int_distribution<std::size_t> bag_size(c.min_instances, c.max_instances);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution is_witness(c.witness_rate);

  std::vector<Bag> bags;
  bags.reserve(c.n_bags);
  const int id_width = static_cast<int>(std::to_string(c.n_bags - 1).size());
  for (std::size_t b = 0; b < c.n_bags; ++b) {
    const std::size_t size = bag_size(rng);
    Bag bag;
    std::string num = std::to_string(b);
    bag.id = "bag" + std::string(static_cast<std::size_t>(id_width) - num.size(), '0') + num;
    bag.label = labels[b];
    bag.instances = Matrix(size, c.feature_count);
    for (double& v : bag.instances.values()) v = normal(rng);
    if (bag.label == 1) {
      std::vector<bool> witness(size);
      bool any = false;
      for (std::size_t k = 0; k < size; ++k) any |= (witness[k] = is_witness(rng));
      if (!any) {
        witness[std::uniform_int_distribution<std::size_t>(0, size - 1)(rng)] = true;
      }
      for (std::size_t k = 0; k < size; ++k) {
        if (witness[k]) bag.instances(k, 0) += c.separation;
      }
    }
    bags.push_back(std::move(bag));
  }
  return Dataset(std::move(bags));
}

namespace {

std::uint32_t read_be32(std::istream& in, const char* what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw DataError(std::string("truncated IDX ") + what + " header");
  }
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) |
         (std::uint32_t{b[2]} << 8) | std::uint32_t{b[3]};
}

}  // namespace

IdxImages parse_idx(std::istream& images, std::istream& labels) {
  if (read_be32(images, "images") != 0x00000803u) throw DataError("bad IDX magic (images)");
  if (read_be32(labels, "labels") != 0x00000801u) throw DataError("bad IDX magic (labels)");
  const std::size_t count = read_be32(images, "images");
  const std::size_t rows = read_be32(images, "images");
  const std::size_t cols = read_be32(images, "images");
  const std::size_t label_count = read_be32(labels, "labels");
  if (count != label_count) {
    throw DataError("IDX count mismatch: " + std::to_string(count) + " images, " +
                    std::to_string(label_count) + " labels");
  }
  IdxImages out;
  out.image_rows = rows;
  out.image_cols = cols;
  out.images = Matrix(count, rows * cols);
  std::vector<unsigned char> pixels(rows * cols);
  for (std::size_t i = 0; i < count; ++i) {
    if (!images.read(reinterpret_cast<char*>(pixels.data()),
                     static_cast<std::streamsize>(pixels.size()))) {
      throw DataError("truncated IDX image data");
    }
    auto row = out.images.row(i);
    for (std::size_t p = 0; p < pixels.size(); ++p) row[p] = pixels[p] / 255.0;
  }
  std::vector<unsigned char> raw(count);
  if (!labels.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(count))) {
    throw DataError("truncated IDX label data");
  }
  out.labels.assign(raw.begin(), raw.end());
  return out;
}

IdxImages load_idx_images(const std::filesystem::path& images_path,
                          const std::filesystem::path& labels_path) {
  std::ifstream images(images_path, std::ios::binary);
  if (!images) throw DataError("data file not found: " + images_path.string());
  std::ifstream labels(labels_path, std::ios::binary);
  if (!labels) throw DataError("data file not found: " + labels_path.string());
  return parse_idx(images, labels);
}

Dataset build_digit_bags(const IdxImages& pool, const DigitBagConfig& c) {
  if (c.min_bag_size < 1 || c.max_bag_size < c.min_bag_size) {
    throw UsageError("bag size range must satisfy 1 <= min <= max");
  }
  if (c.n_bags < 2) throw UsageError("n_bags must be at least 2");
  std::vector<std::size_t> targets;
  std::vector<std::size_t> others;
  for (std::size_t i = 0; i < pool.labels.size(); ++i) {
    (pool.labels[i] == c.target_digit ? targets : others).push_back(i);
  }
  if (targets.empty() || others.empty()) {
    throw DataError("image pool must contain both target and non-target digits");
  }
  Rng rng(derive_seed(c.seed, {}));
  std::shuffle(targets.begin(), targets.end(), rng);
  std::shuffle(others.begin(), others.end(), rng);
  const double target_share =
      static_cast<double>(targets.size()) / static_cast<double>(pool.labels.size());

  std::vector<int> labels(c.n_bags, 0);
  std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(c.n_bags / 2), 1);
  std::shuffle(labels.begin(), labels.end(), rng);

  std::uniform_int_distribution<std::size_t> bag_size(c.min_bag_size, c.max_bag_size);
  auto take = [](std::vector<std::size_t>& from) {
    if (from.empty()) throw DataError("image pool exhausted");
    std::size_t i = from.back();
    from.pop_back();
    return i;
  };

  std::vector<Bag> bags;
  bags.reserve(c.n_bags);
  for (std::size_t b = 0; b < c.n_bags; ++b) {
    const std::size_t size = bag_size(rng);
    std::vector<std::size_t> members;
    if (labels[b] == 1) {
      std::binomial_distribution<std::size_t> extra(size - 1, target_share);
      const std::size_t n_target = 1 + extra(rng);
      for (std::size_t i = 0; i < n_target; ++i) members.push_back(take(targets));
      for (std::size_t i = n_target; i < size; ++i) members.push_back(take(others));
      std::shuffle(members.begin(), members.end(), rng);
    } else {
      for (std::size_t i = 0; i < size; ++i) members.push_back(take(others));
    }
    Bag bag;
    bag.id = "mnist" + std::to_string(b);
    bag.label = labels[b];
    bag.instances = Matrix(0, pool.images.cols());
    for (std::size_t m : members) bag.instances.append_row(pool.images.row(m));
    bags.push_back(std::move(bag));
  }
  return Dataset(std::move(bags));
}

void feature_moments(const Dataset& data, std::vector<double>& mean,
                     std::vector<double>& stddev) {
  const std::size_t width = data.feature_count();
  mean.assign(width, 0.0);
  stddev.assign(width, 0.0);
  std::vector<double> column;
  column.reserve(data.instance_count());
  for (std::size_t j = 0; j < width; ++j) {
    column.clear();
    for (const Bag& bag : data.bags()) {
      for (std::size_t k = 0; k < bag.size(); ++k) column.push_back(bag.instances(k, j));
    }
    if (column.empty()) continue;
    std::sort(column.begin(), column.end());
    const double n = static_cast<double>(column.size());
    const double mu = std::accumulate(column.begin(), column.end(), 0.0) / n;
    for (double& v : column) v = (v - mu) * (v - mu);
    std::sort(column.begin(), column.end());
    mean[j] = mu;
    stddev[j] = std::sqrt(std::accumulate(column.begin(), column.end(), 0.0) / n);
  }
}

FeatureScaler FeatureScaler::fit(const Dataset& data) {
  FeatureScaler s;
  feature_moments(data, s.mean_, s.stddev_);
  return s;
}

Dataset FeatureScaler::apply(const Dataset& data) const {
  if (data.feature_count() != mean_.size()) throw UsageError("feature width mismatch");
  std::vector<Bag> bags = data.bags();
  for (Bag& bag : bags) {
    for (std::size_t k = 0; k < bag.size(); ++k) {
      auto row = bag.instances.row(k);
      for (std::size_t j = 0; j < row.size(); ++j) {
        row[j] -= mean_[j];
        if (stddev_[j] > 0.0) row[j] /= stddev_[j];
      }
    }
  }
  return Dataset(std::move(bags));
}

}  // namespace protomil

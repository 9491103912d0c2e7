#include "besov/dataset.hpp"

#include <algorithm>
#include <cstring>
#include <limits>
#include <numeric>
#include <random>
#include <unordered_map>

namespace besov {
namespace {

double scale_value(double x, const FeatureRange& range) {
  const double span = range.max - range.min;
  if (!(span > 0.0)) return 0.0;
  return std::clamp((x - range.min) / span, 0.0, 1.0);
}

}  // namespace

MatrixXd NormalizationRecord::apply(const MatrixXd& raw) const {
  if (static_cast<std::size_t>(raw.cols()) != ranges.size()) {
    throw InputError("feature count " + std::to_string(raw.cols()) +
                     " does not match normalization record with " +
                     std::to_string(ranges.size()) + " features");
  }
  MatrixXd out(raw.rows(), raw.cols());
  for (Eigen::Index c = 0; c < raw.cols(); ++c) {
    const FeatureRange& range = ranges[static_cast<std::size_t>(c)];
    for (Eigen::Index r = 0; r < raw.rows(); ++r) out(r, c) = scale_value(raw(r, c), range);
  }
  return out;
}

NormalizedFeatures normalize_features(const MatrixXd& values, NormalizationMode mode) {
  if (values.rows() == 0) throw DomainError("cannot normalize an empty table");
  NormalizedFeatures out;
  out.record.mode = mode;
  out.record.ranges.resize(static_cast<std::size_t>(values.cols()));
  if (mode == NormalizationMode::global && values.size() > 0) {
    const FeatureRange all{values.minCoeff(), values.maxCoeff()};
    std::ranges::fill(out.record.ranges, all);
  } else {
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      out.record.ranges[static_cast<std::size_t>(c)] = {values.col(c).minCoeff(),
                                                        values.col(c).maxCoeff()};
    }
  }
  out.X = out.record.apply(values);
  return out;
}

NormalizedFeatures normalize_features(const RawTable& table, NormalizationMode mode) {
  return normalize_features(table.values, mode);
}

SimplexCodec::SimplexCodec(int num_classes) : vertices_(helmert_simplex<double>(num_classes)) {}

VectorXd SimplexCodec::vertex(int id) const {
  if (id < 0 || id >= num_classes()) {
    throw DomainError("class id " + std::to_string(id) + " outside [0, " +
                      std::to_string(num_classes()) + ")");
  }
  return vertices_.col(id);
}

SimplexCodec build_simplex(int num_classes) { return SimplexCodec(num_classes); }

MatrixXd embed_labels(const RawTable& table, const SimplexCodec& codec) {
  if (table.label_mode != LabelMode::classification) {
    throw DomainError("label embedding requires classification labels");
  }
  MatrixXd Y(static_cast<Eigen::Index>(table.class_ids.size()), codec.dim());
  for (std::size_t i = 0; i < table.class_ids.size(); ++i) {
    Y.row(static_cast<Eigen::Index>(i)) = codec.vertex(table.class_ids[i]).transpose();
  }
  return Y;
}

DecodedLabel decode_label(const VectorXd& v, const SimplexCodec& codec) {
  DecodedLabel best{0, std::numeric_limits<double>::infinity()};
  for (int id = 0; id < codec.num_classes(); ++id) {
    const double d = (v - codec.vertices().col(id)).norm();
    if (d < best.distance) best = {id, d};
  }
  return best;
}

RawTable mislabel(const RawTable& table, double q, std::uint64_t seed) {
  if (!(q >= 0.0 && q <= 1.0)) throw DomainError("mislabel fraction must lie in [0,1]");
  if (table.label_mode != LabelMode::classification) {
    throw DomainError("mislabeling requires classification labels");
  }
  const int L = table.num_classes();
  if (L < 2) throw DomainError("mislabeling requires at least 2 classes");

  RawTable out = table;
  const std::size_t rows = table.class_ids.size();
  // floor(q * rows), robust to q*rows landing just under an integer
  const auto count = std::min(
      rows, static_cast<std::size_t>(std::floor(q * static_cast<double>(rows) * (1.0 + 1e-12))));
  if (count == 0) return out;

  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    0x6d69736cU};
  std::mt19937_64 rng(seq);
  std::vector<std::size_t> chosen;
  chosen.reserve(count);
  std::vector<std::size_t> all(rows);
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::ranges::sample(all, std::back_inserter(chosen), static_cast<std::ptrdiff_t>(count), rng);
  std::uniform_int_distribution<int> draw(0, L - 1);
  for (const std::size_t i : chosen) out.class_ids[i] = draw(rng);
  return out;
}

RawTable align_classes(const RawTable& table, const std::vector<std::string>& class_names) {
  if (table.label_mode != LabelMode::classification) return table;
  std::unordered_map<std::string, int> index;
  for (std::size_t i = 0; i < class_names.size(); ++i) index.emplace(class_names[i], int(i));
  RawTable out = table;
  out.class_names = class_names;
  for (std::size_t r = 0; r < table.class_ids.size(); ++r) {
    const std::string& name = table.class_names[static_cast<std::size_t>(table.class_ids[r])];
    const auto it = index.find(name);
    if (it == index.end()) {
      throw InputError("class '" + name + "' at row " + std::to_string(r + 1) +
                       " is not among the model's classes");
    }
    out.class_ids[r] = it->second;
  }
  return out;
}

LabeledDataset make_dataset(const RawTable& table, const NormalizationRecord& record) {
  LabeledDataset data;
  data.normalization = record;
  data.X = record.apply(table.values);
  if (table.label_mode == LabelMode::classification) {
    data.num_classes = table.num_classes();
    if (data.num_classes < 2) {
      // a single class has no simplex; it sits at the origin of R^1
      data.Y = MatrixXd::Zero(table.values.rows(), 1);
    } else {
      data.Y = embed_labels(table, build_simplex(data.num_classes));
    }
  } else {
    data.num_classes = 1;
    data.Y = table.responses;
  }
  return data;
}

LabeledDataset make_dataset(const RawTable& table, NormalizationMode mode) {
  NormalizedFeatures features = normalize_features(table, mode);
  LabeledDataset data = make_dataset(table, features.record);
  return data;
}

std::string fingerprint(const LabeledDataset& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* bytes, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  const std::int64_t shape[4] = {data.X.rows(), data.X.cols(), data.Y.rows(), data.Y.cols()};
  mix(shape, sizeof shape);
  mix(data.X.data(), sizeof(double) * static_cast<std::size_t>(data.X.size()));
  mix(data.Y.data(), sizeof(double) * static_cast<std::size_t>(data.Y.size()));
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = kHex[h & 0xf];
  return out;
}

}  // namespace besov

#pragma once

#include "besov/types.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace besov {

enum class LabelMode { classification, regression };

/// Header name or 0-based column index. A negative index counts from the end.
using LabelColumn = std::variant<std::string, long>;

/// Parses "3" or "-1" as an index, anything else as a column name.
LabelColumn parse_label_column(const std::string& text);

struct RawTable {
  std::vector<std::string> feature_names;
  MatrixXd values;  // rows x features
  LabelMode label_mode = LabelMode::classification;

  // classification: ids in [0, class_names.size()), re-indexed by first appearance
  std::vector<int> class_ids;
  std::vector<std::string> class_names;

  // regression
  VectorXd responses;

  [[nodiscard]] std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
  [[nodiscard]] std::size_t columns() const { return static_cast<std::size_t>(values.cols()); }
  [[nodiscard]] int num_classes() const { return static_cast<int>(class_names.size()); }
};

RawTable load_table(const std::filesystem::path& path, const LabelColumn& label_column,
                    LabelMode mode);

/// Same as load_table, reading from an already open stream. `source` is used in messages.
RawTable read_table(std::istream& in, const LabelColumn& label_column, LabelMode mode,
                    const std::string& source = "<stream>");

/// Reads a header + numeric table with no label column.
MatrixXd read_feature_matrix(const std::filesystem::path& path,
                             std::vector<std::string>* names = nullptr);

enum class NormalizationMode { per_feature, global };

struct FeatureRange {
  double min = 0.0;
  double max = 0.0;
};

struct NormalizationRecord {
  NormalizationMode mode = NormalizationMode::per_feature;
  std::vector<FeatureRange> ranges;  // one per feature

  /// Maps raw features with the stored ranges, clamping to [0,1].
  [[nodiscard]] MatrixXd apply(const MatrixXd& raw) const;
};

struct NormalizedFeatures {
  MatrixXd X;
  NormalizationRecord record;
};

/// Min-max scaling into the unit cube. Constant columns map to 0.
NormalizedFeatures normalize_features(const MatrixXd& values,
                                      NormalizationMode mode = NormalizationMode::per_feature);
NormalizedFeatures normalize_features(const RawTable& table,
                                      NormalizationMode mode = NormalizationMode::per_feature);

/// Vertices of the regular simplex with L vertices in R^{L-1}, one per column.
///
/// Column i is H e_i where the rows of H are the Helmert contrasts
/// (1,..,1,-k,0,..,0)/sqrt(k(k+1)), k = 1..L-1. H has orthonormal rows spanning
/// {v : sum v = 0}, so the vertices are centred at 0 with pairwise distance sqrt(2).
template <typename Scalar = double>
Matrix<Scalar> helmert_simplex(int L) {
  if (L < 2) throw DomainError("simplex needs at least 2 vertices, got " + std::to_string(L));
  Matrix<Scalar> v = Matrix<Scalar>::Zero(L - 1, L);
  for (int k = 1; k < L; ++k) {
    const Scalar scale = Scalar(1) / std::sqrt(Scalar(k) * Scalar(k + 1));
    for (int i = 0; i < k; ++i) v(k - 1, i) = scale;
    v(k - 1, k) = -Scalar(k) * scale;
  }
  return v;
}

class SimplexCodec {
 public:
  explicit SimplexCodec(int num_classes);

  [[nodiscard]] int num_classes() const { return static_cast<int>(vertices_.cols()); }
  [[nodiscard]] int dim() const { return static_cast<int>(vertices_.rows()); }
  [[nodiscard]] const MatrixXd& vertices() const { return vertices_; }
  [[nodiscard]] VectorXd vertex(int id) const;

 private:
  MatrixXd vertices_;  // (L-1) x L
};

SimplexCodec build_simplex(int num_classes);

MatrixXd embed_labels(const RawTable& table, const SimplexCodec& codec);

struct DecodedLabel {
  int class_id = 0;
  double distance = 0.0;  // to the nearest vertex; smaller is more confident
};

DecodedLabel decode_label(const VectorXd& v, const SimplexCodec& codec);

/// Redraws the label of floor(q*rows) distinct rows uniformly over all classes.
RawTable mislabel(const RawTable& table, double q, std::uint64_t seed);

/// The discrete function f: features in [0,1]^n and vector-valued responses.
struct LabeledDataset {
  MatrixXd X;  // rows x n
  MatrixXd Y;  // rows x (L-1), or rows x 1 for regression
  int num_classes = 1;
  NormalizationRecord normalization;

  [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(X.rows()); }
  [[nodiscard]] std::size_t dim() const { return static_cast<std::size_t>(X.cols()); }
  [[nodiscard]] std::size_t label_dim() const { return static_cast<std::size_t>(Y.cols()); }
};

LabeledDataset make_dataset(const RawTable& table,
                            NormalizationMode mode = NormalizationMode::per_feature);

/// Builds a dataset for `table` with an existing normalization record.
LabeledDataset make_dataset(const RawTable& table, const NormalizationRecord& record);

/// Re-indexes class ids of `table` against a fixed class list (e.g. the one a
/// model was trained with). Unknown class names are an input error.
RawTable align_classes(const RawTable& table, const std::vector<std::string>& class_names);

/// FNV-1a over the bit patterns of X and Y.
std::string fingerprint(const LabeledDataset& data);

}  // namespace besov

#pragma once

#include "besov/dataset.hpp"
#include "besov/forest.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace besov {

inline constexpr int kModelFormatVersion = 1;

/// A trained forest plus what is needed to map raw rows into its domain.
struct Model {
  Forest forest;
  NormalizationRecord normalization;
  LabelMode label_mode = LabelMode::classification;
  std::vector<std::string> class_names;
};

/// Versioned JSON with a fixed field order. Reals use the shortest text that
/// parses back to the same double, so load + serialize reproduces the bytes.
std::string serialize_forest(const Forest& forest);
Forest deserialize_forest(const std::string& text);

std::string serialize_model(const Model& model);
Model deserialize_model(const std::string& text);

void save_model(const std::filesystem::path& path, const Model& model);
Model load_model(const std::filesystem::path& path);

}  // namespace besov

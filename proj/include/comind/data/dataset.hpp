#pragma once

#include "comind/linalg/stats.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace comind::data {

using linalg::Matrix;

/// n x d features of one modality. Rows pair up across modalities by index.
struct FeatureMatrix {
  Matrix values;
  std::string pairing_id;

  std::size_t n() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t d() const { return static_cast<std::size_t>(values.cols()); }
};

enum class Split { Train, Test };

struct PairedDataset {
  FeatureMatrix view1;
  FeatureMatrix view2;
  std::optional<std::vector<int>> labels;
  Split split = Split::Train;

  std::size_t size() const { return view1.n(); }
  /// Throws DataError when views are unpaired, labels have the wrong length or
  /// values are non-finite.
  void validate() const;
  /// Rows selected by `indices`, in that order.
  PairedDataset subset(const std::vector<std::size_t>& indices) const;
};

/// Binary CSFM format: "CSFM", u8 version = 1, u64 n, u64 d, then n*d f64,
/// all little-endian, row-major. load_feature_matrix falls back to CSV when
/// the magic is absent.
inline constexpr char kFeatureMagic[4] = {'C', 'S', 'F', 'M'};
inline constexpr std::uint8_t kFeatureVersion = 1;

FeatureMatrix load_feature_matrix(const std::filesystem::path& path);
void save_feature_matrix(const std::filesystem::path& path, const FeatureMatrix& features);
FeatureMatrix parse_csv_features(const std::string& text);

}  // namespace comind::data

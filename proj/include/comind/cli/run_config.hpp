#pragma once

#include "comind/data/dataset.hpp"
#include "comind/data/metrics.hpp"
#include "comind/model/config.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace comind::cli {

enum class DatasetKind { Mnist, Features };

/// File form of the training configuration: one key=value per line, '#'
/// starts a comment. Relative paths resolve against the config file's
/// directory.
struct RunConfig {
  model::TrainConfig train;
  DatasetKind dataset = DatasetKind::Mnist;
  std::filesystem::path train_images;
  std::filesystem::path train_labels;
  std::filesystem::path test_images;
  std::filesystem::path test_labels;
  std::filesystem::path train_view1;
  std::filesystem::path train_view2;
  std::filesystem::path test_view1;
  std::filesystem::path test_view2;
  data::ClassifierKind classifier = data::ClassifierKind::Logistic;

  bool has_split(data::Split split) const;
};

/// Parses config text. Unknown keys, duplicates and malformed values throw
/// ConfigError. One notice per defaulted key is appended to `notices`.
RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir = {},
                           std::vector<std::string>* notices = nullptr);
RunConfig load_run_config(const std::filesystem::path& path, std::vector<std::string>* notices = nullptr);

/// Loads one split. MNIST images become left/right 28x14 halves scaled to
/// [0, 1]; feature datasets read CSFM or CSV views and optional labels.
data::PairedDataset load_split(const RunConfig& config, data::Split split);

}  // namespace comind::cli

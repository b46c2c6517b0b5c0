#pragma once

#include "comind/data/dataset.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace comind::data {

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

/// Raw images as loaded from IDX. The upstream feature extractor is the
/// identity here: pixels are the features.
struct RawModality {
  std::size_t count = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;  // count * height * width, row-major per image

  std::uint8_t at(std::size_t image, std::size_t row, std::size_t col) const {
    return pixels[(image * height + row) * width + col];
  }
};

struct MnistSplit {
  RawModality images;
  std::vector<int> labels;
};

RawModality load_idx_images(const std::filesystem::path& path);
std::vector<int> load_idx_labels(const std::filesystem::path& path);

/// Loads an image file and its label file and checks that the counts agree.
MnistSplit load_mnist_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

/// Left half (columns 0-13) and right half (columns 14-27) of each 28x28 image,
/// flattened row-major and scaled by 1/255.
PairedDataset split_halves(const RawModality& images, Split split = Split::Train);
PairedDataset split_halves(const MnistSplit& mnist, Split split);

/// Inverse of split_halves: scaled 28x28 images, one per row.
Matrix reassemble_halves(const PairedDataset& halves);

}  // namespace comind::data

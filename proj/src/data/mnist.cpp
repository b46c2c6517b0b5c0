#include "comind/data/mnist.hpp"

#include "comind/error.hpp"
#include "comind/util/binary.hpp"

#include <sstream>

namespace comind::data {

namespace {

std::string hex(std::uint32_t v) {
  std::ostringstream out;
  out << "0x" << std::hex << v;
  return out.str();
}

}  // namespace

RawModality load_idx_images(const std::filesystem::path& path) {
  const auto bytes = util::read_file(path);
  util::ByteReader reader(bytes, path.string());
  const std::uint32_t magic = reader.u32_be();
  if (magic != kIdxImageMagic) {
    throw FormatError(path.string() + ": image magic mismatch, expected " + hex(kIdxImageMagic) + ", found " +
                      hex(magic));
  }
  RawModality out;
  out.count = reader.u32_be();
  out.height = reader.u32_be();
  out.width = reader.u32_be();
  const std::size_t expected = out.count * out.height * out.width;
  if (reader.remaining() != expected) {
    throw FormatError(path.string() + ": expected " + std::to_string(expected) + " pixel bytes, found " +
                      std::to_string(reader.remaining()));
  }
  out.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(reader.position()), bytes.end());
  return out;
}

std::vector<int> load_idx_labels(const std::filesystem::path& path) {
  const auto bytes = util::read_file(path);
  util::ByteReader reader(bytes, path.string());
  const std::uint32_t magic = reader.u32_be();
  if (magic != kIdxLabelMagic) {
    throw FormatError(path.string() + ": label magic mismatch, expected " + hex(kIdxLabelMagic) + ", found " +
                      hex(magic));
  }
  const std::uint32_t count = reader.u32_be();
  if (reader.remaining() != count) {
    throw FormatError(path.string() + ": expected " + std::to_string(count) + " labels, found " +
                      std::to_string(reader.remaining()));
  }
  std::vector<int> labels(count);
  for (std::uint32_t i = 0; i < count; ++i) labels[i] = reader.u8();
  return labels;
}

MnistSplit load_mnist_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  MnistSplit out{load_idx_images(images), load_idx_labels(labels)};
  if (out.images.count != out.labels.size()) {
    throw FormatError("image/label count mismatch: " + std::to_string(out.images.count) + " images, " +
                      std::to_string(out.labels.size()) + " labels");
  }
  return out;
}

PairedDataset split_halves(const RawModality& images, Split split) {
  if (images.height != 28 || images.width != 28) {
    throw ShapeError("split_halves expects 28x28 images, got " + std::to_string(images.height) + "x" +
                     std::to_string(images.width));
  }
  constexpr std::size_t half = 14;
  const auto n = static_cast<Eigen::Index>(images.count);
  PairedDataset out;
  out.split = split;
  out.view1.values.resize(n, 28 * half);
  out.view2.values.resize(n, 28 * half);
  out.view1.pairing_id = "mnist-left";
  out.view2.pairing_id = "mnist-right";
  for (std::size_t i = 0; i < images.count; ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    for (std::size_t r = 0; r < 28; ++r) {
      for (std::size_t c = 0; c < half; ++c) {
        const auto col = static_cast<Eigen::Index>(r * half + c);
        out.view1.values(row, col) = images.at(i, r, c) / 255.0;
        out.view2.values(row, col) = images.at(i, r, c + half) / 255.0;
      }
    }
  }
  return out;
}

PairedDataset split_halves(const MnistSplit& mnist, Split split) {
  PairedDataset out = split_halves(mnist.images, split);
  out.labels = mnist.labels;
  return out;
}

Matrix reassemble_halves(const PairedDataset& halves) {
  constexpr Eigen::Index half = 14;
  if (halves.view1.d() != 28 * half || halves.view2.d() != 28 * half) {
    throw ShapeError("reassemble_halves expects two 392-column views");
  }
  Matrix out(halves.view1.values.rows(), 28 * 28);
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    for (Eigen::Index r = 0; r < 28; ++r) {
      for (Eigen::Index c = 0; c < half; ++c) {
        out(i, r * 28 + c) = halves.view1.values(i, r * half + c);
        out(i, r * 28 + c + half) = halves.view2.values(i, r * half + c);
      }
    }
  }
  return out;
}

}  // namespace comind::data

#include "comind/data/dataset.hpp"

#include "comind/error.hpp"
#include "comind/util/binary.hpp"

#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace comind::data {

void PairedDataset::validate() const {
  if (view1.n() != view2.n()) {
    throw DataError("views are not paired: " + std::to_string(view1.n()) + " vs " + std::to_string(view2.n()) +
                    " rows");
  }
  if (labels && labels->size() != view1.n()) {
    throw DataError("label count " + std::to_string(labels->size()) + " does not match " +
                    std::to_string(view1.n()) + " samples");
  }
  if (!view1.values.allFinite() || !view2.values.allFinite()) throw DataError("non-finite feature values");
}

PairedDataset PairedDataset::subset(const std::vector<std::size_t>& indices) const {
  PairedDataset out;
  out.split = split;
  out.view1.pairing_id = view1.pairing_id;
  out.view2.pairing_id = view2.pairing_id;
  out.view1.values.resize(static_cast<Eigen::Index>(indices.size()), view1.values.cols());
  out.view2.values.resize(static_cast<Eigen::Index>(indices.size()), view2.values.cols());
  if (labels) out.labels.emplace();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto src = static_cast<Eigen::Index>(indices[i]);
    out.view1.values.row(static_cast<Eigen::Index>(i)) = view1.values.row(src);
    out.view2.values.row(static_cast<Eigen::Index>(i)) = view2.values.row(src);
    if (labels) out.labels->push_back((*labels)[indices[i]]);
  }
  return out;
}

namespace {

std::string trim(std::string_view s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string_view::npos) return {};
  const auto end = s.find_last_not_of(" \t\r");
  return std::string(s.substr(begin, end - begin + 1));
}

bool parse_double(const std::string& cell, double& value) {
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  return ec == std::errc() && ptr == last;
}

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

FeatureMatrix parse_csv_features(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<double> values;
  std::size_t cols = 0;
  std::size_t rows = 0;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_commas(line);
    std::vector<double> parsed(cells.size());
    bool numeric = true;
    for (std::size_t j = 0; j < cells.size(); ++j) numeric = numeric && parse_double(cells[j], parsed[j]);
    if (!numeric) {
      // Only the first non-empty line may be a header.
      if (rows == 0 && cols == 0) {
        cols = cells.size();
        continue;
      }
      throw FormatError("CSV line " + std::to_string(line_no) + ": non-numeric cell");
    }
    if (cols == 0) cols = cells.size();
    if (cells.size() != cols) {
      throw FormatError("CSV line " + std::to_string(line_no) + ": expected " + std::to_string(cols) + " cells");
    }
    values.insert(values.end(), parsed.begin(), parsed.end());
    ++rows;
  }
  if (rows == 0) throw FormatError("CSV contains no data rows");
  FeatureMatrix out;
  out.values = Eigen::Map<const Matrix>(values.data(), static_cast<Eigen::Index>(rows),
                                        static_cast<Eigen::Index>(cols));
  return out;
}

FeatureMatrix load_feature_matrix(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = util::read_file(path);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kFeatureMagic, 4) != 0) {
    return parse_csv_features(std::string(bytes.begin(), bytes.end()));
  }
  util::ByteReader reader(bytes, path.string());
  reader.skip(4);
  const std::uint8_t version = reader.u8();
  if (version != kFeatureVersion) throw FormatError("unsupported CSFM version " + std::to_string(version));
  const std::uint64_t n = reader.u64();
  const std::uint64_t d = reader.u64();
  if (d != 0 && n > (reader.remaining() / 8) / d) {
    throw FormatError("CSFM payload size mismatch: header declares " + std::to_string(n) + "x" + std::to_string(d));
  }
  if (reader.remaining() != n * d * 8) {
    throw FormatError("CSFM payload size mismatch: expected " + std::to_string(n * d * 8) + " bytes, found " +
                      std::to_string(reader.remaining()));
  }
  FeatureMatrix out;
  out.values.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  double* dst = out.values.data();
  for (std::uint64_t i = 0; i < n * d; ++i) dst[i] = reader.f64();
  out.pairing_id = path.filename().string();
  return out;
}

void save_feature_matrix(const std::filesystem::path& path, const FeatureMatrix& features) {
  util::ByteWriter writer;
  writer.bytes(kFeatureMagic, 4);
  writer.u8(kFeatureVersion);
  writer.u64(features.n());
  writer.u64(features.d());
  const double* src = features.values.data();
  for (std::size_t i = 0; i < features.n() * features.d(); ++i) writer.f64(src[i]);
  util::write_file(path, writer.buffer());
}

}  // namespace comind::data

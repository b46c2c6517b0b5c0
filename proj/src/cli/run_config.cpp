#include "comind/cli/run_config.hpp"

#include "comind/data/mnist.hpp"
#include "comind/error.hpp"
#include "comind/util/binary.hpp"

#include <charconv>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace comind::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError(key + ": '" + v + "' is not a number");
  return out;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError(key + ": '" + v + "' is not a non-negative integer");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "off" || v == "no") return false;
  throw ConfigError(key + ": '" + v + "' is not a boolean");
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  if (v.empty() || v == "none") return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(static_cast<std::size_t>(parse_uint(key, trim(item))));
  return out;
}

template <typename T>
std::string show(const T& v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

bool RunConfig::has_split(data::Split split) const {
  if (dataset == DatasetKind::Mnist) {
    return split == data::Split::Train ? !train_images.empty() : !test_images.empty();
  }
  return split == data::Split::Train ? !train_view1.empty() && !train_view2.empty()
                                     : !test_view1.empty() && !test_view2.empty();
}

RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir,
                           std::vector<std::string>* notices) {
  RunConfig cfg;
  model::TrainConfig& t = cfg.train;
  auto path = [&](std::filesystem::path& target) {
    return [&target, &base_dir](const std::string&, const std::string& v) {
      const std::filesystem::path p(v);
      target = p.is_absolute() || base_dir.empty() ? p : base_dir / p;
    };
  };
  using Setter = std::function<void(const std::string&, const std::string&)>;
  const std::map<std::string, Setter> setters = {
      {"dataset",
       [&](const std::string& k, const std::string& v) {
         if (v == "mnist") {
           cfg.dataset = DatasetKind::Mnist;
         } else if (v == "features") {
           cfg.dataset = DatasetKind::Features;
         } else {
           throw ConfigError(k + ": expected mnist or features, got '" + v + "'");
         }
       }},
      {"train_images", path(cfg.train_images)},
      {"train_labels", path(cfg.train_labels)},
      {"test_images", path(cfg.test_images)},
      {"test_labels", path(cfg.test_labels)},
      {"train_view1", path(cfg.train_view1)},
      {"train_view2", path(cfg.train_view2)},
      {"test_view1", path(cfg.test_view1)},
      {"test_view2", path(cfg.test_view2)},
      {"k", [&](const std::string& k, const std::string& v) { t.k = parse_uint(k, v); }},
      {"q", [&](const std::string& k, const std::string& v) { t.q = parse_uint(k, v); }},
      {"lambda1", [&](const std::string& k, const std::string& v) { t.lambda1 = parse_double(k, v); }},
      {"lambda2", [&](const std::string& k, const std::string& v) { t.lambda2 = parse_double(k, v); }},
      {"nu1", [&](const std::string& k, const std::string& v) { t.nu1 = parse_double(k, v); }},
      {"nu2", [&](const std::string& k, const std::string& v) { t.nu2 = parse_double(k, v); }},
      {"gamma", [&](const std::string& k, const std::string& v) { t.gamma = parse_double(k, v); }},
      {"alpha", [&](const std::string& k, const std::string& v) { t.alpha = parse_double(k, v); }},
      {"lr", [&](const std::string& k, const std::string& v) { t.learning_rate = parse_double(k, v); }},
      {"batch_size", [&](const std::string& k, const std::string& v) { t.batch_size = parse_uint(k, v); }},
      {"epochs", [&](const std::string& k, const std::string& v) { t.epochs = parse_uint(k, v); }},
      {"seed", [&](const std::string& k, const std::string& v) { t.seed = parse_uint(k, v); }},
      {"hidden", [&](const std::string& k, const std::string& v) { t.hidden = parse_list(k, v); }},
      {"whiten", [&](const std::string& k, const std::string& v) { t.whitening = parse_bool(k, v); }},
      {"classifier",
       [&](const std::string& k, const std::string& v) {
         if (v == "logistic") {
           cfg.classifier = data::ClassifierKind::Logistic;
         } else if (v == "hinge") {
           cfg.classifier = data::ClassifierKind::Hinge;
         } else {
           throw ConfigError(k + ": expected logistic or hinge, got '" + v + "'");
         }
       }},
  };

  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(number) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("line " + std::to_string(number) + ": unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError("line " + std::to_string(number) + ": duplicate key '" + key + "'");
    it->second(key, value);
  }

  if (notices != nullptr) {
    const model::TrainConfig d;
    const std::map<std::string, std::string> defaults = {
        {"dataset", "mnist"},
        {"k", show(d.k)},
        {"q", "k"},
        {"lambda1", show(d.lambda1)},
        {"lambda2", show(d.lambda2)},
        {"nu1", show(d.nu1)},
        {"nu2", show(d.nu2)},
        {"gamma", show(d.gamma)},
        {"alpha", show(d.alpha)},
        {"lr", show(d.learning_rate)},
        {"batch_size", show(d.batch_size)},
        {"epochs", show(d.epochs)},
        {"seed", show(d.seed)},
        {"hidden", "500,300"},
        {"whiten", "true"},
        {"classifier", "logistic"},
    };
    for (const auto& [key, value] : defaults) {
      if (seen.count(key) == 0) notices->push_back("notice: " + key + " not set, using default " + value);
    }
  }
  t.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path, std::vector<std::string>* notices) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = util::read_file(path);
  } catch (const DataError& e) {
    throw ConfigError(std::string("cannot read config: ") + e.what());
  }
  return parse_run_config(std::string(bytes.begin(), bytes.end()), path.parent_path(), notices);
}

namespace {

std::vector<int> load_labels(const std::filesystem::path& path, std::size_t n) {
  const std::vector<std::uint8_t> bytes = util::read_file(path);
  std::vector<int> labels;
  if (bytes.size() >= 4 && bytes[0] == 0 && bytes[1] == 0 && bytes[2] == 8 && bytes[3] == 1) {
    labels = data::load_idx_labels(path);
  } else {
    std::istringstream in(std::string(bytes.begin(), bytes.end()));
    std::string tok;
    while (in >> tok) {
      int v = 0;
      const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc() || ptr != tok.data() + tok.size()) throw FormatError("label '" + tok + "' is not an integer");
      labels.push_back(v);
    }
  }
  if (labels.size() != n) {
    throw DataError(path.string() + ": " + std::to_string(labels.size()) + " labels for " + std::to_string(n) +
                    " samples");
  }
  return labels;
}

}  // namespace

data::PairedDataset load_split(const RunConfig& config, data::Split split) {
  const bool train = split == data::Split::Train;
  if (!config.has_split(split)) {
    throw ConfigError(std::string("config does not name the ") + (train ? "training" : "test") + " data");
  }
  data::PairedDataset out;
  const std::filesystem::path& labels = train ? config.train_labels : config.test_labels;
  if (config.dataset == DatasetKind::Mnist) {
    const std::filesystem::path& images = train ? config.train_images : config.test_images;
    if (labels.empty()) {
      out = data::split_halves(data::load_idx_images(images), split);
    } else {
      out = data::split_halves(data::load_mnist_idx(images, labels), split);
    }
  } else {
    out.view1 = data::load_feature_matrix(train ? config.train_view1 : config.test_view1);
    out.view2 = data::load_feature_matrix(train ? config.train_view2 : config.test_view2);
    out.split = split;
    if (!labels.empty()) out.labels = load_labels(labels, out.view1.n());
  }
  out.validate();
  return out;
}

}  // namespace comind::cli

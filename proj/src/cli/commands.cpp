#include "comind/cli/commands.hpp"

#include "comind/cli/checkpoint.hpp"
#include "comind/cli/run_config.hpp"
#include "comind/data/metrics.hpp"
#include "comind/error.hpp"
#include "comind/linear/oracle.hpp"
#include "comind/scores/scores.hpp"
#include "comind/util/binary.hpp"

#include <charconv>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace comind::cli {

int guarded(const std::function<int()>& body, std::ostream& err) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const CheckpointError& e) {
    err << "checkpoint error: " << e.what() << '\n';
    return kExitCheckpoint;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const FormatError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const ShapeError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::pair<std::size_t, std::size_t> parse_index_range(const std::string& text) {
  auto number = [&](std::string_view s) {
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
      throw ConfigError("bad sample index or range '" + text + "'");
    }
    return v;
  };
  const auto colon = text.find(':');
  if (colon == std::string::npos) {
    const std::size_t i = number(text);
    return {i, i + 1};
  }
  const std::size_t a = number(std::string_view(text).substr(0, colon));
  const std::size_t b = number(std::string_view(text).substr(colon + 1));
  if (b <= a) throw ConfigError("empty sample range '" + text + "'");
  return {a, b};
}

namespace {

RunConfig read_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed, bool strict,
                      std::ostream& err) {
  std::vector<std::string> notices;
  RunConfig cfg = load_run_config(path, &notices);
  for (const std::string& n : notices) err << n << '\n';
  if (seed) cfg.train.seed = *seed;
  cfg.train.strict = strict;
  return cfg;
}

data::Split parse_split(const std::string& s) {
  if (s == "train") return data::Split::Train;
  if (s == "test") return data::Split::Test;
  throw ConfigError("split must be train or test, got '" + s + "'");
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  util::write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::filesystem::path history_path(const std::filesystem::path& explicit_path, const std::filesystem::path& out) {
  if (!explicit_path.empty()) return explicit_path;
  std::filesystem::path p = out;
  p += ".history.csv";
  return p;
}

void check_pairing(const model::CommonComponent& c, const data::PairedDataset& d) {
  if (c.encoder1.input_dim() != d.view1.d() || c.encoder2.input_dim() != d.view2.d()) {
    throw ShapeError("checkpoint expects " + std::to_string(c.encoder1.input_dim()) + "/" +
                     std::to_string(c.encoder2.input_dim()) + " features, data has " + std::to_string(d.view1.d()) +
                     "/" + std::to_string(d.view2.d()));
  }
}

}  // namespace

int cmd_train_common(const TrainCommonOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(
      [&] {
        if (options.out.empty()) throw ConfigError("--out is required");
        const RunConfig cfg = read_config(options.config, options.seed, options.strict, err);
        const data::PairedDataset train = load_split(cfg, data::Split::Train);
        std::optional<data::PairedDataset> test;
        if (cfg.has_split(data::Split::Test)) test = load_split(cfg, data::Split::Test);

        const model::CommonEpochHook hook = [&](std::size_t epoch, const model::CommonComponent& c) {
          double corr = std::nan("");
          if (test) {
            corr = data::total_cross_correlation(model::encode_common(c, test->view1.values, 1, model::Mode::Eval),
                                                 model::encode_common(c, test->view2.values, 2, model::Mode::Eval));
          }
          err << "epoch " << epoch << " test_total_correlation " << corr << '\n';
          return corr;
        };
        const model::CommonTrainResult result = model::train_common(cfg.train, train, hook);
        save_checkpoint(options.out, result.component);

        std::ostringstream csv;
        csv << "epoch,correlation,decorrelation1,decorrelation2,penalty,total,test_total_correlation\n";
        for (const model::CommonEpoch& e : result.history) {
          csv << e.epoch << ',' << format_double(e.correlation) << ',' << format_double(e.decorrelation1) << ','
              << format_double(e.decorrelation2) << ',' << format_double(e.penalty) << ',' << format_double(e.total)
              << ',' << format_double(e.eval_metric) << '\n';
        }
        const std::filesystem::path hist = history_path(options.history, options.out);
        write_text(hist, csv.str());
        out << "checkpoint=" << options.out.string() << '\n' << "history=" << hist.string() << '\n';
        return static_cast<int>(kExitOk);
      },
      err);
}

int cmd_train_individual(const TrainIndividualOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(
      [&] {
        if (options.out.empty()) throw ConfigError("--out is required");
        if (options.common.empty()) throw ConfigError("--common is required");
        const RunConfig cfg = read_config(options.config, options.seed, options.strict, err);
        const model::CommonComponent common = load_common(options.common);
        const data::PairedDataset train = load_split(cfg, data::Split::Train);
        check_pairing(common, train);
        model::TrainConfig tc = cfg.train;
        if (tc.k != common.k) {
          err << "notice: using k=" << common.k << " from the common checkpoint\n";
          tc.k = common.k;
        }
        const model::IndividualTrainResult result = model::train_individual(tc, train, common);
        save_checkpoint(options.out, result.component);

        std::ostringstream csv;
        csv << "epoch,reconstruction1,decorrelation1,reconstruction2,decorrelation2,total\n";
        for (const model::IndividualEpoch& e : result.history) {
          csv << e.epoch << ',' << format_double(e.reconstruction1) << ',' << format_double(e.decorrelation1) << ','
              << format_double(e.reconstruction2) << ',' << format_double(e.decorrelation2) << ','
              << format_double(e.total) << '\n';
        }
        const std::filesystem::path hist = history_path(options.history, options.out);
        write_text(hist, csv.str());
        out << "checkpoint=" << options.out.string() << '\n' << "history=" << hist.string() << '\n';
        return static_cast<int>(kExitOk);
      },
      err);
}

int cmd_eval(const EvalOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(
      [&] {
        if (options.metric != "corr" && options.metric != "recognition") {
          throw ConfigError("metric must be corr or recognition, got '" + options.metric + "'");
        }
        const RunConfig cfg = read_config(options.config, options.seed, false, err);
        const model::CommonComponent common = load_common(options.common);
        const data::PairedDataset d = load_split(cfg, parse_split(options.split));
        check_pairing(common, d);
        const linalg::Matrix z1 = model::encode_common(common, d.view1.values, 1, model::Mode::Eval);
        const linalg::Matrix z2 = model::encode_common(common, d.view2.values, 2, model::Mode::Eval);
        double value = 0.0;
        if (options.metric == "corr") {
          value = data::total_cross_correlation(z1, z2);
        } else {
          if (!d.labels) throw DataError("recognition needs labels for the " + options.split + " split");
          data::RecognitionOptions ro;
          ro.seed = cfg.train.seed;
          ro.classifier.kind = cfg.classifier;
          const data::RecognitionResult r = data::recognition_accuracy(z1, z2, *d.labels, ro);
          if (!r.all_converged) err << "warning: a fold's classifier stopped before reaching the gradient tolerance\n";
          value = r.mean_accuracy;
        }
        out << format_double(value) << '\n';
        if (!options.out.empty()) {
          std::ostringstream csv;
          csv << "metric,k,value,seed\n"
              << options.metric << ',' << common.k << ',' << format_double(value) << ',' << cfg.train.seed << '\n';
          write_text(options.out, csv.str());
        }
        return static_cast<int>(kExitOk);
      },
      err);
}

int cmd_gradmap(const GradmapOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(
      [&] {
        if (options.kind != "common" && options.kind != "individual") {
          throw ConfigError("kind must be common or individual, got '" + options.kind + "'");
        }
        if (options.out.empty()) throw ConfigError("--out is required");
        const bool individual_kind = options.kind == "individual";
        if (individual_kind && options.individual.empty()) throw ConfigError("kind=individual needs --individual");
        const RunConfig cfg = read_config(options.config, std::nullopt, false, err);
        const model::CommonComponent common = load_common(options.common);
        std::optional<model::IndividualComponent> individual;
        if (individual_kind) {
          individual = load_individual(options.individual);
          if (individual->common_checksum != common.checksum()) {
            throw CheckpointError("individual checkpoint was trained against a different common component");
          }
        }
        const data::PairedDataset d = load_split(cfg, parse_split(options.split));
        check_pairing(common, d);
        if (options.end <= options.begin || options.end > d.size()) {
          throw DataError("sample range [" + std::to_string(options.begin) + ", " + std::to_string(options.end) +
                          ") is outside 0.." + std::to_string(d.size()));
        }
        auto layout = [&](std::size_t dim) -> std::pair<std::size_t, std::size_t> {
          if (cfg.dataset == DatasetKind::Mnist) return {28, dim / 28};
          return {1, dim};
        };
        std::filesystem::create_directories(options.out);

        std::ostringstream csv;
        csv << "index,view,kind,score,degenerate\n";
        std::size_t files = 0;
        for (std::size_t i = options.begin; i < options.end; ++i) {
          const linalg::Vector x1 = d.view1.values.row(static_cast<Eigen::Index>(i)).transpose();
          const linalg::Vector x2 = d.view2.values.row(static_cast<Eigen::Index>(i)).transpose();
          std::optional<scores::ScoreResult> shared;
          if (!individual_kind) shared = scores::grad_map_common(common, x1, x2);
          for (int view : {1, 2}) {
            const scores::ScoreResult r =
                individual_kind
                    ? scores::grad_map_individual(*individual, common, view == 1 ? x1 : x2, view == 1 ? x2 : x1, view)
                    : *shared;
            const linalg::Vector& map = view == 1 ? *r.map1 : *r.map2;
            const auto [rows, cols] = layout(static_cast<std::size_t>(map.size()));
            const std::filesystem::path file =
                options.out / (std::to_string(i) + "_" + std::to_string(view) + "_" + options.kind + ".pgm");
            scores::export_saliency(map, rows, cols, file);
            ++files;
            csv << i << ',' << view << ',' << options.kind << ',' << format_double(r.value) << ','
                << (r.degenerate ? 1 : 0) << '\n';
          }
        }
        const std::filesystem::path scores_path = options.out / ("scores_" + options.kind + ".csv");
        write_text(scores_path, csv.str());
        out << "images=" << files << '\n' << "scores=" << scores_path.string() << '\n';
        return static_cast<int>(kExitOk);
      },
      err);
}

int cmd_oracle_suite(const OracleOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(
      [&] {
        linear::OracleSuiteOptions so;
        so.seed = options.seed;
        so.instances = options.instances;
        so.fault = options.inject_fault ? 1e-3 : 0.0;
        if (options.inject_fault) err << "notice: closed-form common gradient perturbed by 1e-3\n";
        const std::vector<linear::OracleCheck> checks = linear::run_oracle_suite(so);
        bool all = true;
        out << "check,max_error,tolerance,result\n";
        for (const linear::OracleCheck& c : checks) {
          all = all && c.passed;
          out << c.name << ',' << std::scientific << std::setprecision(3) << c.error << ',' << c.tolerance << ','
              << (c.passed ? "PASS" : "FAIL") << '\n';
        }
        return static_cast<int>(all ? kExitOk : kExitOracle);
      },
      err);
}

}  // namespace comind::cli

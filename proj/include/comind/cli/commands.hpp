#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>

namespace comind::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 1,
  kExitData = 2,
  kExitNumeric = 3,
  kExitCheckpoint = 4,
  kExitOracle = 5,
};

/// Runs `body`, mapping library exceptions to exit codes and reporting them
/// on `err`.
int guarded(const std::function<int()>& body, std::ostream& err);

struct TrainCommonOptions {
  std::filesystem::path config;
  std::optional<std::uint64_t> seed;
  std::filesystem::path out;      // checkpoint
  std::filesystem::path history;  // defaults to <out>.history.csv
  bool strict = false;
};

struct TrainIndividualOptions {
  std::filesystem::path config;
  std::optional<std::uint64_t> seed;
  std::filesystem::path common;
  std::filesystem::path out;
  std::filesystem::path history;
  bool strict = false;
};

struct EvalOptions {
  std::filesystem::path config;
  std::optional<std::uint64_t> seed;
  std::filesystem::path common;
  std::string metric;             // corr | recognition
  std::string split = "test";     // train | test
  std::filesystem::path out;      // CSV report
};

struct GradmapOptions {
  std::filesystem::path config;
  std::filesystem::path common;
  std::filesystem::path individual;  // required for kind=individual
  std::string kind = "common";       // common | individual
  std::size_t begin = 0;             // half-open sample range
  std::size_t end = 1;
  std::string split = "test";
  std::filesystem::path out;         // output directory
};

struct OracleOptions {
  std::uint64_t seed = 0;
  std::size_t instances = 100;
  bool inject_fault = false;
};

int cmd_train_common(const TrainCommonOptions& options, std::ostream& out, std::ostream& err);
int cmd_train_individual(const TrainIndividualOptions& options, std::ostream& out, std::ostream& err);
int cmd_eval(const EvalOptions& options, std::ostream& out, std::ostream& err);
int cmd_gradmap(const GradmapOptions& options, std::ostream& out, std::ostream& err);
int cmd_oracle_suite(const OracleOptions& options, std::ostream& out, std::ostream& err);

/// Parses "7" as [7, 8) and "a:b" as [a, b).
std::pair<std::size_t, std::size_t> parse_index_range(const std::string& text);

/// Shortest decimal text that reads back to the same double.
std::string format_double(double v);

}  // namespace comind::cli

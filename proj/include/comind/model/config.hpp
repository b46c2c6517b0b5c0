#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

namespace comind::model {

/// Hyperparameters for both training stages.
struct TrainConfig {
  std::size_t k = 50;
  std::size_t q = 0;  // 0 means "same as k"
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  double nu1 = 10.0;
  double nu2 = 10.0;
  double gamma = 0.0;  // contractive penalty weight, 0 disables it
  double alpha = 0.5;  // elastic-net mix: alpha * L1 + (1 - alpha) * squared L2
  double learning_rate = 2e-4;
  std::size_t batch_size = 2048;
  std::size_t epochs = 300;
  std::uint64_t seed = 0;
  std::vector<std::size_t> hidden{500, 300};
  bool whitening = true;
  bool strict = false;

  std::size_t latent_q() const { return q == 0 ? k : q; }
  /// Throws ConfigError on out-of-range values.
  void validate() const;
};

/// Per-epoch means over minibatches.
struct CommonEpoch {
  std::size_t epoch = 0;
  double correlation = 0.0;      // sum_i (1 - C_ii)^2
  double decorrelation1 = 0.0;   // sum_{i != j} (Sigma1)_ij^2, unweighted
  double decorrelation2 = 0.0;
  double penalty = 0.0;          // contractive penalty, unweighted
  double total = 0.0;
  double eval_metric = std::numeric_limits<double>::quiet_NaN();
};

struct IndividualEpoch {
  std::size_t epoch = 0;
  double reconstruction1 = 0.0;
  double decorrelation1 = 0.0;  // sum (Delta1)_kl^2, unweighted
  double reconstruction2 = 0.0;
  double decorrelation2 = 0.0;
  double total = 0.0;
};

}  // namespace comind::model

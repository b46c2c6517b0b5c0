#pragma once

#include "comind/autodiff/tape.hpp"
#include "comind/linalg/stats.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace comind::model {

using linalg::Matrix;

enum class Mode { Train, Eval };

/// How the terminal whitening layer normalizes a batch.
enum class WhitenMode {
  Batch,          // batch statistics, differentiated through
  BatchDetached,  // batch statistics treated as constants
  Running,        // running statistics (eval)
};

struct Layer {
  ad::Tensor weight;  // in x out
  ad::Tensor bias;    // 1 x out
};

/// Records column whitening of z on the tape. Degenerate columns (population
/// std below 1e-8) are zeroed; their indices are reported through `stats`.
/// When `source` is given the statistics come from it instead of z (same
/// shape), e.g. a copy of the batch whose inputs are constants.
ad::Var whiten_on_tape(ad::Tape& tape, ad::Var z, WhitenMode mode, linalg::WhitenStats* stats = nullptr,
                       ad::Var source = {});

/// Fully connected network: relu on hidden layers, linear output, optional
/// terminal whitening with running statistics (momentum 0.9).
class Mlp {
 public:
  static constexpr double kRunningMomentum = 0.9;

  Mlp() = default;
  /// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
  Mlp(std::vector<std::size_t> sizes, bool terminal_whitening, std::uint64_t seed);
  static Mlp zeros(std::vector<std::size_t> sizes, bool terminal_whitening);

  std::size_t input_dim() const { return sizes_.front(); }
  std::size_t output_dim() const { return sizes_.back(); }
  const std::vector<std::size_t>& sizes() const { return sizes_; }
  bool whitening() const { return whitening_; }

  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }
  const linalg::Vector& running_mean() const { return running_mean_; }
  const linalg::Vector& running_var() const { return running_var_; }
  void set_running_stats(linalg::Vector mean, linalg::Vector var);

  /// Weights and biases in declaration order: W0, b0, W1, b1, ...
  std::vector<ad::Tensor*> parameters();
  std::vector<const ad::Tensor*> parameters() const;
  std::size_t parameter_count() const;

  /// Parameters as tape leaves, in parameters() order.
  std::vector<ad::Var> bind(ad::Tape& tape) const;

  struct Output {
    ad::Var raw;       // last linear layer, before whitening
    ad::Var whitened;  // equals raw when terminal whitening is off
    linalg::WhitenStats batch_stats;
  };

  /// Records the forward pass. `params` comes from bind() (or any leaves of
  /// matching shapes). In Train mode the whitening uses batch statistics.
  Output forward(ad::Tape& tape, std::span<const ad::Var> params, ad::Var x, Mode mode) const;

  /// Numeric forward pass. Does not touch running statistics.
  Matrix predict(const Matrix& x, Mode mode) const;

  /// running = 0.9 * running + 0.1 * batch (population variance).
  void update_running_stats(const linalg::WhitenStats& batch);

  /// CRC32 over parameters and running statistics.
  std::uint32_t checksum() const;

 private:
  std::vector<std::size_t> sizes_;
  bool whitening_ = false;
  std::vector<Layer> layers_;
  linalg::Vector running_mean_;
  linalg::Vector running_var_;
};

struct Encoding {
  Matrix values;  // whitened when the network whitens
  Matrix raw;
  // Some output column is constant over the batch (or has a vanishing
  // running variance in eval mode) and was zeroed by whitening.
  bool degenerate = false;
};

/// Numeric forward pass with the degenerate-output flag.
Encoding encode(const Mlp& mlp, const Matrix& x, Mode mode);

/// Copies a matrix into a tensor (and back).
ad::Tensor to_tensor(const Matrix& m);
Matrix to_matrix(const ad::Tensor& t);

}  // namespace comind::model

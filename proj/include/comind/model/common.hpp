#pragma once

#include "comind/data/dataset.hpp"
#include "comind/model/config.hpp"
#include "comind/model/mlp.hpp"

#include <functional>
#include <vector>

namespace comind::model {

/// Paired encoders mapping each view to a k-dimensional common representation.
struct CommonComponent {
  Mlp encoder1;
  Mlp encoder2;
  std::size_t k = 0;
  bool trained = false;

  const Mlp& encoder(int view) const;
  Mlp& encoder(int view);
  std::uint32_t checksum() const;
};

/// Freshly initialized component: d_i -> hidden... -> k per view.
CommonComponent make_common(std::size_t d1, std::size_t d2, const TrainConfig& config);

/// Encodes one view (1 or 2).
Matrix encode_common(const CommonComponent& component, const Matrix& x, int view, Mode mode);
Encoding encode_common_detailed(const CommonComponent& component, const Matrix& x, int view, Mode mode);

struct CommonLossTerms {
  ad::Var total;
  ad::Var correlation;
  ad::Var decorrelation1;
  ad::Var decorrelation2;
};

/// sum_i (1 - C_ii)^2 + lambda1 sum_{i!=j} (S1)_ij^2 + lambda2 sum_{i!=j} (S2)_ij^2
/// with C = Z1^T Z2 / n, S_v = Z_v^T Z_v / n on whitened inputs.
CommonLossTerms common_loss(ad::Tape& tape, ad::Var z1, ad::Var z2, double lambda1, double lambda2);

struct CommonLossValue {
  double total = 0.0;
  double correlation = 0.0;
  double decorrelation1 = 0.0;
  double decorrelation2 = 0.0;
};

CommonLossValue common_loss(const Matrix& z1, const Matrix& z2, double lambda1, double lambda2);

/// Same loss from precomputed C = Z1^T Z2 / n and S_v = Z_v^T Z_v / n.
CommonLossValue common_loss_from_moments(const Matrix& cross, const Matrix& within1, const Matrix& within2,
                                         double lambda1, double lambda2);

/// One minibatch objective recorded on a tape.
struct CommonObjective {
  CommonLossTerms loss;
  ad::Var penalty;  // unweighted contractive penalty; invalid when gamma == 0
  ad::Var total;    // loss.total + gamma * penalty
  std::vector<ad::Var> params1;
  std::vector<ad::Var> params2;
  ad::Var x1;
  ad::Var x2;
  linalg::WhitenStats batch_stats1;
  linalg::WhitenStats batch_stats2;
};

/// Records the training objective for one batch. When gamma > 0 the inputs
/// are also bound as leaves (x1, x2) for the penalty's score maps; otherwise
/// x1 and x2 stay invalid.
CommonObjective record_common_objective(ad::Tape& tape, const CommonComponent& component, const Matrix& x1,
                                        const Matrix& x2, const TrainConfig& config);

struct CommonTrainResult {
  CommonComponent component;
  std::vector<CommonEpoch> history;
};

/// Called after every epoch; the return value is stored as eval_metric.
using CommonEpochHook = std::function<double(std::size_t epoch, const CommonComponent&)>;

CommonTrainResult train_common(const TrainConfig& config, const data::PairedDataset& data,
                               const CommonEpochHook& hook = {});
CommonTrainResult train_common(const TrainConfig& config, const data::PairedDataset& data, CommonComponent initial,
                               const CommonEpochHook& hook = {});

}  // namespace comind::model

#pragma once

#include "comind/model/common.hpp"

namespace comind::model {

/// Per-view individual encoders (d_i -> q) and decoders ([z; h] -> d_i),
/// trained against a frozen common component.
struct IndividualComponent {
  Mlp encoder1;
  Mlp encoder2;
  Mlp decoder1;
  Mlp decoder2;
  std::size_t k = 0;
  std::size_t q = 0;
  std::uint32_t common_checksum = 0;  // of the common component it was trained against
  bool trained = false;

  const Mlp& encoder(int view) const;
  const Mlp& decoder(int view) const;
  Mlp& encoder(int view);
  Mlp& decoder(int view);
  std::uint32_t checksum() const;
};

/// Decoders mirror the encoder stack: k + q -> reversed hidden -> d_i.
IndividualComponent make_individual(std::size_t d1, std::size_t d2, const TrainConfig& config);

Matrix encode_individual(const IndividualComponent& component, const Matrix& x, int view, Mode mode);
Encoding encode_individual_detailed(const IndividualComponent& component, const Matrix& x, int view, Mode mode);

/// Decoder of `view` applied to [z, h] (z columns first).
Matrix reconstruct(const IndividualComponent& component, const Matrix& z, const Matrix& h, int view);

struct IndividualLossTerms {
  ad::Var total;
  ad::Var reconstruction;
  ad::Var decorrelation;  // sum of squared entries of Zhat^T Hhat / n
};

/// sum_j ||xhat_j - x_j||^2 + nu * sum_kl (Zhat^T Hhat / n)_kl^2
IndividualLossTerms individual_loss(ad::Tape& tape, ad::Var x, ad::Var xhat, ad::Var zhat, ad::Var hhat, double nu);

struct IndividualLossValue {
  double total = 0.0;
  double reconstruction = 0.0;
  double decorrelation = 0.0;
};

IndividualLossValue individual_loss(const Matrix& x, const Matrix& xhat, const Matrix& zhat, const Matrix& hhat,
                                    double nu);
/// Same loss given the cross-correlation block directly.
IndividualLossValue individual_loss_from_delta(const Matrix& x, const Matrix& xhat, const Matrix& delta, double nu);

struct IndividualObjective {
  IndividualLossTerms view1;
  IndividualLossTerms view2;
  ad::Var total;
  std::vector<ad::Var> params;  // enc1, dec1, enc2, dec2 in parameters() order
  linalg::WhitenStats batch_stats1;
  linalg::WhitenStats batch_stats2;
};

/// Records the stage-two objective for one batch. z1, z2 are the frozen
/// common latents of the batch (eval mode) and enter as constants.
IndividualObjective record_individual_objective(ad::Tape& tape, const IndividualComponent& component,
                                                const Matrix& x1, const Matrix& x2, const Matrix& z1,
                                                const Matrix& z2, const TrainConfig& config);

struct IndividualTrainResult {
  IndividualComponent component;
  std::vector<IndividualEpoch> history;
};

/// Throws Error when `common` is untrained or does not fit the data.
IndividualTrainResult train_individual(const TrainConfig& config, const data::PairedDataset& data,
                                       const CommonComponent& common);
IndividualTrainResult train_individual(const TrainConfig& config, const data::PairedDataset& data,
                                       const CommonComponent& common, IndividualComponent initial);

}  // namespace comind::model

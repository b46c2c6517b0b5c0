#pragma once

#include "comind/autodiff/tape.hpp"
#include "comind/linalg/stats.hpp"

#include <filesystem>
#include <optional>

namespace comind::model {
struct CommonComponent;
struct IndividualComponent;
}  // namespace comind::model

namespace comind::scores {

using linalg::Matrix;
using linalg::Vector;

struct ScoreValue {
  double value = 0.0;
  bool degenerate = false;  // a latent norm fell below 1e-8; value forced to 0
};

/// s = (z1~ . z2~)(z1 . z2) with z~ the L2-normalized vectors.
ScoreValue common_score(const Vector& z1, const Vector& z2);

/// r = 1/2 ||P h||^2 where P projects out span{z1, z2} (orthogonalized).
/// Requires h, z1 and z2 to share a dimension.
double individual_score(const Vector& h, const Vector& z1, const Vector& z2);

/// alpha * ||g||_1 + (1 - alpha) * ||g||_2^2
double contractive_penalty(const Vector& grad, double alpha);

/// Row-wise common scores (n x 1) of two n x k latent batches. Rows where
/// either latent norm is below 1e-8 score 0.
ad::Var common_score_rows(ad::Tape& tape, ad::Var z1, ad::Var z2);

/// Sum over rows of alpha * ||g_j||_1 + (1 - alpha) * ||g_j||_2^2.
ad::Var contractive_penalty_rows(ad::Tape& tape, ad::Var grad, double alpha);

enum class ScoreKind { Common, Individual };

struct ScoreResult {
  double value = 0.0;
  ScoreKind kind = ScoreKind::Common;
  std::optional<Vector> map1;  // d(score)/d(x1)
  std::optional<Vector> map2;  // d(score)/d(x2)
  bool degenerate = false;
};

/// Common score of one sample pair and its gradients with respect to both
/// inputs, through both encoders in eval mode.
ScoreResult grad_map_common(const model::CommonComponent& common, const Vector& x1, const Vector& x2);

/// Individual score of view `view` and its gradient with respect to that
/// view's input. The projector built from both common latents is held
/// constant while differentiating.
ScoreResult grad_map_individual(const model::IndividualComponent& individual, const model::CommonComponent& common,
                                const Vector& x_view, const Vector& x_other, int view);

/// Absolute values min-max scaled to 0..255 and written as binary PGM (P5).
/// A constant map is written as all-128.
void export_saliency(const Vector& map, std::size_t rows, std::size_t cols, const std::filesystem::path& path);

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // row-major
};

std::vector<std::uint8_t> saliency_bytes(const Vector& map);
GrayImage read_pgm(const std::filesystem::path& path);

}  // namespace comind::scores

#pragma once

#include "comind/data/dataset.hpp"

#include <cstdint>
#include <vector>

namespace comind::data {

/// Paired views built from latent factors:
///   view1 latents = [a_1..a_s, private1...],  a_i ~ N(0, 1)
///   view2 latents = [b_1..b_s, private2...],  b_i = rho_i a_i + sqrt(1 - rho_i^2) e_i
/// each then mixed by a random well-conditioned matrix (orthogonal times
/// scales in [1, 3]). Population canonical correlations are exactly the rho_i
/// followed by zeros.
struct SyntheticSpec {
  std::size_t n = 5000;
  std::size_t d1 = 20;
  std::size_t d2 = 20;
  std::vector<double> shared_correlations{0.95, 0.9, 0.85, 0.8, 0.75};
  // Per-view scale of the private factors relative to the shared ones.
  double private_scale = 1.0;
  bool mix = true;
  std::uint64_t seed = 0;
};

struct SyntheticData {
  PairedDataset dataset;
  Matrix mixing1;  // d1 x d1, latents -> features
  Matrix mixing2;
};

SyntheticData make_shared_latent(const SyntheticSpec& spec);

/// Another draw from the same generative model (same mixing matrices).
PairedDataset resample(const SyntheticData& source, const SyntheticSpec& spec, std::uint64_t seed,
                       bool break_pairing = false);

/// Random orthogonal matrix (QR of a Gaussian matrix, sign-fixed).
Matrix random_orthogonal(std::size_t d, std::uint64_t seed);

}  // namespace comind::data

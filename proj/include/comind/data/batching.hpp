#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace comind::data {

using Batch = std::vector<std::size_t>;

/// Minibatches of row indices for one epoch. The permutation is a pure
/// function of (n, seed, epoch); a trailing batch shorter than batch_size is
/// dropped when drop_last is set.
std::vector<Batch> batch_iterator(std::size_t n, std::size_t batch_size, std::uint64_t seed, std::uint64_t epoch,
                                  bool drop_last = true);

}  // namespace comind::data

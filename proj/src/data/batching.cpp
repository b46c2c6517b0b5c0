#include "comind/data/batching.hpp"

#include "comind/error.hpp"
#include "comind/util/random.hpp"

#include <string>

namespace comind::data {

std::vector<Batch> batch_iterator(std::size_t n, std::size_t batch_size, std::uint64_t seed, std::uint64_t epoch,
                                  bool drop_last) {
  if (batch_size < 2) throw ConfigError("batch size must be at least 2");
  if (batch_size > n) {
    throw DataError("batch size " + std::to_string(batch_size) + " exceeds " + std::to_string(n) + " samples");
  }
  util::Rng rng(util::mix_seed(seed, epoch));
  const std::vector<std::size_t> order = util::permutation(n, rng);
  std::vector<Batch> batches;
  for (std::size_t begin = 0; begin < n; begin += batch_size) {
    const std::size_t end = std::min(n, begin + batch_size);
    if (end - begin < batch_size && drop_last) break;
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(begin),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

}  // namespace comind::data

#pragma once

#include "comind/model/individual.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace comind::cli {

/// CSCK layout, little-endian:
///   "CSCK", u8 version = 1, u8 kind, u64 k, u64 q, u32 common CRC (0 for
///   common checkpoints), u32 network count,
///   per network: u8 whitening, u32 L, L x u64 layer sizes,
///   per whitening network: running mean then running variance (f64),
///   per network: W0, b0, W1, b1, ... (f64, row-major),
///   u32 CRC32 of every preceding byte.
/// Common checkpoints hold encoder1, encoder2; individual checkpoints hold
/// encoder1, encoder2, decoder1, decoder2.
inline constexpr char kCheckpointMagic[4] = {'C', 'S', 'C', 'K'};
inline constexpr std::uint8_t kCheckpointVersion = 1;

enum class CheckpointKind : std::uint8_t { Common = 1, Individual = 2 };

std::vector<std::uint8_t> serialize(const model::CommonComponent& component);
std::vector<std::uint8_t> serialize(const model::IndividualComponent& component);

/// Throws CheckpointError on a bad magic, version, kind, CRC or length.
CheckpointKind checkpoint_kind(std::span<const std::uint8_t> bytes);
model::CommonComponent parse_common(std::span<const std::uint8_t> bytes);
model::IndividualComponent parse_individual(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const model::CommonComponent& component);
void save_checkpoint(const std::filesystem::path& path, const model::IndividualComponent& component);
model::CommonComponent load_common(const std::filesystem::path& path);
model::IndividualComponent load_individual(const std::filesystem::path& path);

}  // namespace comind::cli

#include "comind/cli/checkpoint.hpp"

#include "comind/error.hpp"
#include "comind/util/binary.hpp"

#include <cstring>
#include <string>

namespace comind::cli {

namespace {

constexpr std::uint64_t kMaxDim = 1u << 24;

void write_network_header(util::ByteWriter& w, const model::Mlp& mlp) {
  w.u8(mlp.whitening() ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(mlp.sizes().size()));
  for (std::size_t s : mlp.sizes()) w.u64(s);
}

void write_vector(util::ByteWriter& w, const linalg::Vector& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) w.f64(v(i));
}

std::vector<std::uint8_t> serialize_networks(CheckpointKind kind, std::uint64_t k, std::uint64_t q,
                                             std::uint32_t common_crc, std::span<const model::Mlp* const> nets) {
  util::ByteWriter w;
  w.bytes(kCheckpointMagic, sizeof(kCheckpointMagic));
  w.u8(kCheckpointVersion);
  w.u8(static_cast<std::uint8_t>(kind));
  w.u64(k);
  w.u64(q);
  w.u32(common_crc);
  w.u32(static_cast<std::uint32_t>(nets.size()));
  for (const model::Mlp* m : nets) write_network_header(w, *m);
  for (const model::Mlp* m : nets) {
    if (!m->whitening()) continue;
    write_vector(w, m->running_mean());
    write_vector(w, m->running_var());
  }
  for (const model::Mlp* m : nets) {
    for (const ad::Tensor* p : m->parameters()) {
      for (double v : p->data()) w.f64(v);
    }
  }
  const std::uint32_t crc = util::crc32_of(w.buffer());
  w.u32(crc);
  return std::move(w.buffer());
}

struct Parsed {
  CheckpointKind kind;
  std::uint64_t k;
  std::uint64_t q;
  std::uint32_t common_crc;
  std::vector<model::Mlp> nets;
};

Parsed parse(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 + 2 + 8 + 8 + 4 + 4 + 4) throw CheckpointError("checkpoint is truncated");
  if (std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) throw CheckpointError("not a CSCK checkpoint");
  const std::size_t body = bytes.size() - 4;
  util::ByteReader tail(bytes.subspan(body), "checkpoint");
  const std::uint32_t stored = tail.u32();
  if (util::crc32_of(bytes.first(body)) != stored) throw CheckpointError("checkpoint CRC mismatch");

  try {
    util::ByteReader r(bytes.first(body), "checkpoint");
    r.skip(4);
    if (r.u8() != kCheckpointVersion) throw CheckpointError("unsupported checkpoint version");
    const std::uint8_t kind = r.u8();
    if (kind != static_cast<std::uint8_t>(CheckpointKind::Common) &&
        kind != static_cast<std::uint8_t>(CheckpointKind::Individual)) {
      throw CheckpointError("unknown checkpoint kind " + std::to_string(kind));
    }
    Parsed p{static_cast<CheckpointKind>(kind), r.u64(), r.u64(), r.u32(), {}};
    const std::uint32_t count = r.u32();
    const std::uint32_t expected = p.kind == CheckpointKind::Common ? 2 : 4;
    if (count != expected) throw CheckpointError("checkpoint holds " + std::to_string(count) + " networks");
    for (std::uint32_t i = 0; i < count; ++i) {
      const bool whitening = r.u8() != 0;
      const std::uint32_t layers = r.u32();
      if (layers < 2 || layers > 64) throw CheckpointError("implausible layer count in checkpoint");
      std::vector<std::size_t> sizes(layers);
      for (std::size_t& s : sizes) {
        const std::uint64_t v = r.u64();
        if (v == 0 || v > kMaxDim) throw CheckpointError("implausible layer size in checkpoint");
        s = static_cast<std::size_t>(v);
      }
      p.nets.push_back(model::Mlp::zeros(std::move(sizes), whitening));
    }
    for (model::Mlp& m : p.nets) {
      if (!m.whitening()) continue;
      const auto dim = static_cast<Eigen::Index>(m.output_dim());
      linalg::Vector mean(dim);
      linalg::Vector var(dim);
      for (Eigen::Index i = 0; i < dim; ++i) mean(i) = r.f64();
      for (Eigen::Index i = 0; i < dim; ++i) var(i) = r.f64();
      m.set_running_stats(std::move(mean), std::move(var));
    }
    for (model::Mlp& m : p.nets) {
      for (ad::Tensor* t : m.parameters()) {
        for (double& v : t->data()) v = r.f64();
      }
    }
    if (r.remaining() != 0) throw CheckpointError("checkpoint has trailing bytes");
    return p;
  } catch (const FormatError& e) {
    throw CheckpointError(std::string("checkpoint payload is shorter than its declared sizes: ") + e.what());
  }
}

}  // namespace

std::vector<std::uint8_t> serialize(const model::CommonComponent& c) {
  const model::Mlp* nets[2] = {&c.encoder1, &c.encoder2};
  return serialize_networks(CheckpointKind::Common, c.k, 0, 0, nets);
}

std::vector<std::uint8_t> serialize(const model::IndividualComponent& c) {
  const model::Mlp* nets[4] = {&c.encoder1, &c.encoder2, &c.decoder1, &c.decoder2};
  return serialize_networks(CheckpointKind::Individual, c.k, c.q, c.common_checksum, nets);
}

CheckpointKind checkpoint_kind(std::span<const std::uint8_t> bytes) { return parse(bytes).kind; }

model::CommonComponent parse_common(std::span<const std::uint8_t> bytes) {
  Parsed p = parse(bytes);
  if (p.kind != CheckpointKind::Common) throw CheckpointError("expected a common checkpoint");
  model::CommonComponent c;
  c.k = static_cast<std::size_t>(p.k);
  c.encoder1 = std::move(p.nets[0]);
  c.encoder2 = std::move(p.nets[1]);
  if (c.encoder1.output_dim() != c.k || c.encoder2.output_dim() != c.k) {
    throw CheckpointError("common checkpoint encoders do not output k dimensions");
  }
  c.trained = true;
  return c;
}

model::IndividualComponent parse_individual(std::span<const std::uint8_t> bytes) {
  Parsed p = parse(bytes);
  if (p.kind != CheckpointKind::Individual) throw CheckpointError("expected an individual checkpoint");
  model::IndividualComponent c;
  c.k = static_cast<std::size_t>(p.k);
  c.q = static_cast<std::size_t>(p.q);
  c.common_checksum = p.common_crc;
  c.encoder1 = std::move(p.nets[0]);
  c.encoder2 = std::move(p.nets[1]);
  c.decoder1 = std::move(p.nets[2]);
  c.decoder2 = std::move(p.nets[3]);
  if (c.encoder1.output_dim() != c.q || c.encoder2.output_dim() != c.q ||
      c.decoder1.input_dim() != c.k + c.q || c.decoder2.input_dim() != c.k + c.q) {
    throw CheckpointError("individual checkpoint network sizes disagree with k and q");
  }
  c.trained = true;
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const model::CommonComponent& component) {
  util::write_file(path, serialize(component));
}

void save_checkpoint(const std::filesystem::path& path, const model::IndividualComponent& component) {
  util::write_file(path, serialize(component));
}

namespace {

std::vector<std::uint8_t> read_checkpoint(const std::filesystem::path& path) {
  try {
    return util::read_file(path);
  } catch (const DataError& e) {
    throw CheckpointError(e.what());
  }
}

}  // namespace

model::CommonComponent load_common(const std::filesystem::path& path) { return parse_common(read_checkpoint(path)); }

model::IndividualComponent load_individual(const std::filesystem::path& path) {
  return parse_individual(read_checkpoint(path));
}

}  // namespace comind::cli

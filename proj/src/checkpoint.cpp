#include "mgvae/checkpoint.hpp"

#include "mgvae/error.hpp"

#include "binary_io.hpp"

#include <set>

namespace mgvae {

namespace {
constexpr char kMagic[6] = {'M', 'G', 'C', 'K', 'P', 'T'};
}

void save_checkpoint(const std::filesystem::path& path, const std::string& kind, const std::string& config_json,
                     const ParameterSet& params, std::span<const std::string> prefixes) {
  const auto ids = params.with_prefix(prefixes);
  std::string out(kMagic, sizeof kMagic);
  io::put_u32(out, kCheckpointVersion);
  io::put_string(out, kind);
  io::put_string(out, config_json);
  io::put_u32(out, static_cast<std::uint32_t>(ids.size()));
  for (auto id : ids) {
    const auto& t = params.value(id);
    io::put_string(out, params.name(id));
    io::put_u32(out, static_cast<std::uint32_t>(t.rows()));
    io::put_u32(out, static_cast<std::uint32_t>(t.cols()));
    for (auto v : t.values()) io::put_f32(out, v);
  }
  io::write_file(path, out);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  io::Reader r(bytes, path.string());
  r.magic(kMagic, sizeof kMagic);
  const auto version = r.u32();
  if (version != kCheckpointVersion) r.fail("unsupported checkpoint version " + std::to_string(version));
  Checkpoint c;
  c.kind = r.string();
  c.config_json = r.string();
  const auto count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    auto name = r.string();
    const auto rows = r.u32();
    const auto cols = r.u32();
    r.need(4ull * rows * cols);
    Tensor t(rows, cols);
    for (auto& v : t.values()) v = r.f32();
    c.tensors.emplace_back(std::move(name), std::move(t));
  }
  if (r.remaining() != 0) r.fail("trailing bytes after last tensor");
  return c;
}

void apply_checkpoint(const Checkpoint& ckpt, ParameterSet& params, std::span<const std::string> required_prefixes) {
  std::set<std::string> seen;
  for (const auto& [name, t] : ckpt.tensors) {
    const auto id = params.find(name);
    if (!id) throw FormatError(ckpt.kind + " checkpoint: unknown parameter " + name);
    auto& dst = params.mutable_value(*id);
    if (dst.rows() != t.rows() || dst.cols() != t.cols()) {
      throw FormatError(ckpt.kind + " checkpoint: " + name + " has shape " + shape_string(t) + ", model expects " +
                        shape_string(dst));
    }
    dst = t;
    seen.insert(name);
  }
  for (auto id : params.with_prefix(required_prefixes)) {
    if (!seen.contains(params.name(id))) {
      throw FormatError(ckpt.kind + " checkpoint: missing parameter " + params.name(id));
    }
  }
}

}  // namespace mgvae

#include "hep/nn/checkpoint.hpp"

#include "hep/container.hpp"
#include "hep/error.hpp"

namespace hep::nn {

namespace {

void put_rep(BinaryWriter& w, const RepSpec& r) {
  w.i32(r.u);
  w.i32(r.n0);
  w.i32(r.n1);
  w.i32(r.nreg);
}

RepSpec get_rep(BinaryReader& r) {
  RepSpec s;
  s.u = r.i32();
  s.n0 = r.i32();
  s.n1 = r.i32();
  s.nreg = r.i32();
  return s;
}

void put_values(BinaryWriter& w, const std::vector<double>& v) {
  for (double x : v) w.f64(x);
}

std::vector<double> get_values(BinaryReader& r, std::size_t n) {
  if (r.remaining() / 8 < n) throw TruncatedFile("checkpoint: value array runs past end of file");
  std::vector<double> v(n);
  for (auto& x : v) x = r.f64();
  return v;
}

std::string describe(const Tying& t) {
  auto rep = [](const RepSpec& r) {
    return "(u=" + std::to_string(r.u) + "," + std::to_string(r.n0) + "," + std::to_string(r.n1) + "," +
           std::to_string(r.nreg) + ")";
  };
  return to_string(t.kind) + " " + rep(t.in) + "->" + rep(t.out);
}

}  // namespace

Checkpoint snapshot(const ParamStore& store, const AdamState& adam, std::int64_t iteration,
                    std::string config_json) {
  Checkpoint ck;
  ck.config_json = std::move(config_json);
  ck.iteration = iteration;
  for (const auto& p : store.params()) ck.blocks.push_back({p.name, p.shape, p.tying, p.value});
  ck.adam = adam;
  return ck;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck) {
  const bool moments = !ck.adam.m.empty();
  if (moments && (ck.adam.m.size() != ck.blocks.size() || ck.adam.v.size() != ck.blocks.size()))
    throw InvalidArgument("checkpoint: optimizer state does not match the parameter blocks");
  BinaryWriter w;
  w.magic("HEPC");
  w.u32(kCheckpointVersion);
  w.str(ck.config_json);
  w.i64(ck.iteration);
  w.u64(ck.blocks.size());
  for (const auto& b : ck.blocks) {
    w.str(b.name);
    w.u32(static_cast<std::uint32_t>(b.shape.size()));
    for (int d : b.shape) w.i32(d);
    w.str(to_string(b.tying.kind));
    put_rep(w, b.tying.in);
    put_rep(w, b.tying.out);
    w.u64(b.value.size());
    put_values(w, b.value);
  }
  w.i64(ck.adam.step);
  w.u32(moments ? 1 : 0);
  if (moments)
    for (std::size_t i = 0; i < ck.blocks.size(); ++i) {
      if (ck.adam.m[i].size() != ck.blocks[i].value.size() || ck.adam.v[i].size() != ck.blocks[i].value.size())
        throw InvalidArgument("checkpoint: moment buffer size differs for " + ck.blocks[i].name);
      put_values(w, ck.adam.m[i]);
      put_values(w, ck.adam.v[i]);
    }
  return w.buffer();
}

Checkpoint decode_checkpoint(std::vector<std::uint8_t> bytes) {
  BinaryReader r(std::move(bytes));
  if (r.magic(4) != "HEPC") throw UnknownMagic("not a checkpoint file (magic is not HEPC)");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw VersionMismatch("checkpoint version " + std::to_string(version) + ", expected " +
                          std::to_string(kCheckpointVersion));
  Checkpoint ck;
  ck.config_json = r.str();
  ck.iteration = r.i64();
  const std::uint64_t n = r.u64();
  for (std::uint64_t i = 0; i < n; ++i) {
    ParamBlock b;
    b.name = r.str();
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw FormatError("checkpoint: block " + b.name + " has implausible rank");
    std::size_t numel = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      const int d = r.i32();
      if (d < 1) throw FormatError("checkpoint: block " + b.name + " has a non-positive dimension");
      b.shape.push_back(d);
      numel *= static_cast<std::size_t>(d);
    }
    try {
      b.tying.kind = tying_kind_from_string(r.str());
    } catch (const InvalidArgument& e) {
      throw FormatError(std::string("checkpoint: ") + e.what());
    }
    b.tying.in = get_rep(r);
    b.tying.out = get_rep(r);
    const std::uint64_t count = r.u64();
    if (count != numel) throw FormatError("checkpoint: block " + b.name + " value count does not match its shape");
    b.value = get_values(r, count);
    ck.blocks.push_back(std::move(b));
  }
  ck.adam.step = r.i64();
  if (r.u32() == 1)
    for (const auto& b : ck.blocks) {
      ck.adam.m.push_back(get_values(r, b.value.size()));
      ck.adam.v.push_back(get_values(r, b.value.size()));
    }
  if (!r.at_end()) throw FormatError("checkpoint: trailing bytes after optimizer state");
  return ck;
}

void write_checkpoint(const std::string& path, const Checkpoint& ck) {
  write_file_bytes(path, encode_checkpoint(ck));
}

Checkpoint read_checkpoint(const std::string& path) { return decode_checkpoint(read_file_bytes(path)); }

void restore(const Checkpoint& ck, ParamStore& store, AdamState* adam) {
  auto& params = store.params();
  if (params.size() != ck.blocks.size())
    throw FormatError("checkpoint has " + std::to_string(ck.blocks.size()) + " parameter blocks, model has " +
                      std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& b = ck.blocks[i];
    const auto& p = params[i];
    if (b.name != p.name) throw FormatError("checkpoint block " + b.name + " where model expects " + p.name);
    if (b.shape != p.shape) throw FormatError("checkpoint block " + b.name + " has a different shape");
    if (!(b.tying == p.tying))
      throw FormatError("checkpoint block " + b.name + " is " + describe(b.tying) + ", model expects " +
                        describe(p.tying));
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i].value = ck.blocks[i].value;
  if (adam) *adam = ck.adam;
}

}  // namespace hep::nn

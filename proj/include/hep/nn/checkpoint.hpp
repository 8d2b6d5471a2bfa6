#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hep/nn/param.hpp"

namespace hep::nn {

/// Checkpoint container ("HEPC"), little-endian.
///
///   bytes 0..3   magic "HEPC"
///   u32          version (kCheckpointVersion)
///   str          run config as JSON (u32 length + bytes)
///   i64          training iteration
///   u64          block count
///   per block:   str name, u32 rank, rank x i32 dims, str tying kind,
///                rep in (i32 u, n0, n1, nreg), rep out (same),
///                u64 n, n x f64 raw values
///   i64          optimizer step
///   u32          1 if moment buffers follow, else 0
///   per block:   n x f64 first moment, n x f64 second moment
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct ParamBlock {
  std::string name;
  std::vector<int> shape;
  Tying tying;
  std::vector<double> value;
};

struct Checkpoint {
  std::string config_json;
  std::int64_t iteration = 0;
  std::vector<ParamBlock> blocks;
  AdamState adam;
};

Checkpoint snapshot(const ParamStore& store, const AdamState& adam, std::int64_t iteration,
                    std::string config_json);

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck);
Checkpoint decode_checkpoint(std::vector<std::uint8_t> bytes);

void write_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint read_checkpoint(const std::string& path);

/// Copies values (and optimizer state when `adam` is non-null) into a store
/// built from the same config. Throws FormatError naming the first block whose
/// name, shape or representation differs.
void restore(const Checkpoint& ck, ParamStore& store, AdamState* adam = nullptr);

}  // namespace hep::nn

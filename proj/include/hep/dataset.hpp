#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hep/scene.hpp"

namespace hep {

/// Dataset container ("HEPD"). All integers and floats little-endian.
///
///   bytes 0..3   magic "HEPD"
///   u32          version (kDatasetVersion)
///   u32          record kind: 1 = demonstrations, 2 = training pairs
///   u32 kf, u32 m, u32 t_hist, u32 t_act
///   u64          record count
///   records...
///
/// state (13 x f64): position xyz, q row-major (9), aperture c
/// observation: u32 kf, u64 n_points, n_points x (xyz + kf features) f64,
///              t_hist states, t_act states
/// demonstration: str task_id (u32 length + bytes), u64 seed,
///                transform (f64 tx, ty, tz, i32 m, i32 u), u64 n_frames,
///                n_frames x (i64 tick, observation, executed state)
/// training pair: observation, m states, f64 keypose xyz
inline constexpr std::uint32_t kDatasetVersion = 1;

struct DatasetHeader {
  int kf = 3;
  int m = 18;
  int t_hist = 1;
  int t_act = 3;

  bool operator==(const DatasetHeader&) const = default;
};

enum class RecordKind : std::uint32_t { Demonstrations = 1, TrainingPairs = 2 };

struct Dataset {
  DatasetHeader header;
  RecordKind kind = RecordKind::Demonstrations;
  std::vector<Demonstration> demos;
  std::vector<TrainingPair> pairs;
};

std::vector<std::uint8_t> encode_dataset(const DatasetHeader& header,
                                         std::span<const Demonstration> demos);
std::vector<std::uint8_t> encode_dataset(const DatasetHeader& header,
                                         std::span<const TrainingPair> pairs);
Dataset decode_dataset(std::vector<std::uint8_t> bytes);

void write_dataset(const std::string& path, const DatasetHeader& header,
                   std::span<const Demonstration> demos);
void write_dataset(const std::string& path, const DatasetHeader& header,
                   std::span<const TrainingPair> pairs);

/// Throws UnknownMagic, VersionMismatch, TruncatedFile or FeatureWidthMismatch.
Dataset read_dataset(const std::string& path);

}  // namespace hep

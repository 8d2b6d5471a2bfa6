#include "hep/dataset.hpp"

#include <string>

#include "hep/container.hpp"
#include "hep/error.hpp"

namespace hep {

namespace {

void put_state(BinaryWriter& w, const GripperState& s) {
  for (int a = 0; a < 3; ++a) w.f64(s.position[a]);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) w.f64(s.q(r, c));
  w.f64(s.c);
}

GripperState get_state(BinaryReader& r) {
  GripperState s;
  for (int a = 0; a < 3; ++a) s.position[a] = r.f64();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) s.q(i, j) = r.f64();
  s.c = r.f64();
  return s;
}

void put_observation(BinaryWriter& w, const DatasetHeader& h, const Observation& o) {
  if (o.cloud.feature_width() != h.kf)
    throw FeatureWidthMismatch("observation feature width " +
                               std::to_string(o.cloud.feature_width()) + " != header kf " +
                               std::to_string(h.kf));
  if (static_cast<int>(o.state_history.size()) != h.t_hist ||
      static_cast<int>(o.action_history.size()) != h.t_act)
    throw InvalidArgument("observation history lengths do not match the dataset header");
  w.u32(static_cast<std::uint32_t>(h.kf));
  w.u64(o.cloud.size());
  for (std::size_t i = 0; i < o.cloud.size(); ++i) {
    for (int a = 0; a < 3; ++a) w.f64(o.cloud.position(i)[a]);
    for (double f : o.cloud.features(i)) w.f64(f);
  }
  for (const auto& s : o.state_history) put_state(w, s);
  for (const auto& s : o.action_history) put_state(w, s);
}

Observation get_observation(BinaryReader& r, const DatasetHeader& h) {
  const auto kf = static_cast<int>(r.u32());
  if (kf != h.kf)
    throw FeatureWidthMismatch("record feature width " + std::to_string(kf) +
                               " != header kf " + std::to_string(h.kf));
  Observation o;
  o.cloud = PointCloud(kf);
  const std::uint64_t n = r.u64();
  if (n > r.remaining()) throw TruncatedFile("point count exceeds file size");
  o.cloud.reserve(n);
  std::vector<double> f(static_cast<std::size_t>(kf));
  for (std::uint64_t i = 0; i < n; ++i) {
    Vec3 p;
    for (int a = 0; a < 3; ++a) p[a] = r.f64();
    for (auto& v : f) v = r.f64();
    o.cloud.add(p, f);
  }
  for (int i = 0; i < h.t_hist; ++i) o.state_history.push_back(get_state(r));
  for (int i = 0; i < h.t_act; ++i) o.action_history.push_back(get_state(r));
  return o;
}

void put_header(BinaryWriter& w, const DatasetHeader& h, RecordKind kind, std::uint64_t count) {
  w.magic("HEPD");
  w.u32(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(kind));
  w.u32(static_cast<std::uint32_t>(h.kf));
  w.u32(static_cast<std::uint32_t>(h.m));
  w.u32(static_cast<std::uint32_t>(h.t_hist));
  w.u32(static_cast<std::uint32_t>(h.t_act));
  w.u64(count);
}

}  // namespace

std::vector<std::uint8_t> encode_dataset(const DatasetHeader& h,
                                         std::span<const Demonstration> demos) {
  BinaryWriter w;
  put_header(w, h, RecordKind::Demonstrations, demos.size());
  for (const auto& d : demos) {
    w.str(d.task_id);
    w.u64(d.seed);
    for (int a = 0; a < 3; ++a) w.f64(d.scene_transform.t[a]);
    w.i32(d.scene_transform.m);
    w.i32(d.scene_transform.u);
    w.u64(d.frames.size());
    for (const auto& f : d.frames) {
      w.i64(f.tick);
      put_observation(w, h, f.obs);
      put_state(w, f.executed);
    }
  }
  return w.buffer();
}

std::vector<std::uint8_t> encode_dataset(const DatasetHeader& h,
                                         std::span<const TrainingPair> pairs) {
  BinaryWriter w;
  put_header(w, h, RecordKind::TrainingPairs, pairs.size());
  for (const auto& p : pairs) {
    if (static_cast<int>(p.target_chunk.size()) != h.m)
      throw InvalidArgument("training pair chunk length does not match header horizon");
    put_observation(w, h, p.obs);
    for (const auto& s : p.target_chunk.steps) put_state(w, s);
    for (int a = 0; a < 3; ++a) w.f64(p.target_keypose[a]);
  }
  return w.buffer();
}

Dataset decode_dataset(std::vector<std::uint8_t> bytes) {
  BinaryReader r(std::move(bytes));
  if (r.remaining() < 4 || r.magic(4) != "HEPD") throw UnknownMagic("not a HEPD dataset");
  const std::uint32_t version = r.u32();
  if (version != kDatasetVersion)
    throw VersionMismatch("dataset version " + std::to_string(version) + ", expected " +
                          std::to_string(kDatasetVersion));
  Dataset ds;
  const std::uint32_t kind = r.u32();
  if (kind != 1 && kind != 2) throw FormatError("unknown dataset record kind");
  ds.kind = static_cast<RecordKind>(kind);
  ds.header.kf = static_cast<int>(r.u32());
  ds.header.m = static_cast<int>(r.u32());
  ds.header.t_hist = static_cast<int>(r.u32());
  ds.header.t_act = static_cast<int>(r.u32());
  const std::uint64_t count = r.u64();
  const DatasetHeader& h = ds.header;

  for (std::uint64_t i = 0; i < count; ++i) {
    if (ds.kind == RecordKind::Demonstrations) {
      Demonstration d;
      d.task_id = r.str();
      d.seed = r.u64();
      for (int a = 0; a < 3; ++a) d.scene_transform.t[a] = r.f64();
      d.scene_transform.m = r.i32();
      d.scene_transform.u = r.i32();
      const std::uint64_t nf = r.u64();
      if (nf > r.remaining()) throw TruncatedFile("frame count exceeds file size");
      for (std::uint64_t k = 0; k < nf; ++k) {
        DemoFrame f;
        f.tick = r.i64();
        f.obs = get_observation(r, h);
        f.executed = get_state(r);
        d.frames.push_back(std::move(f));
      }
      ds.demos.push_back(std::move(d));
    } else {
      TrainingPair p;
      p.obs = get_observation(r, h);
      for (int k = 0; k < h.m; ++k) p.target_chunk.steps.push_back(get_state(r));
      for (int a = 0; a < 3; ++a) p.target_keypose[a] = r.f64();
      ds.pairs.push_back(std::move(p));
    }
  }
  if (!r.at_end()) throw FormatError("trailing bytes after the last record");
  return ds;
}

void write_dataset(const std::string& path, const DatasetHeader& h,
                   std::span<const Demonstration> demos) {
  write_file_bytes(path, encode_dataset(h, demos));
}

void write_dataset(const std::string& path, const DatasetHeader& h,
                   std::span<const TrainingPair> pairs) {
  write_file_bytes(path, encode_dataset(h, pairs));
}

Dataset read_dataset(const std::string& path) { return decode_dataset(read_file_bytes(path)); }

}  // namespace hep

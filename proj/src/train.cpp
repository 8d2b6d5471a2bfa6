#include "hep/train.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "hep/container.hpp"
#include "hep/error.hpp"

namespace hep {

namespace fs = std::filesystem;

// --- agent ------------------------------------------------------------------

Agent::Agent(const RunConfig& c) : cfg(c) {
  cfg.validate();
  Rng rng(mix_seed(cfg.seed, 0x5eed));
  high = std::make_unique<HighLevelNet>(store, cfg.high_config(), rng);
  eps = std::make_unique<EpsNet>(store, cfg.low_config(), rng);
  low = {eps.get(), cfg.low_config(), cfg.low_config().schedule()};
}

PolicyOutput Agent::act(const Observation& o, Rng& rng) const { return pi_full(*high, low, o, rng); }

ActionChunk AgentPolicy::act(const Scene&, const Observation& obs, Rng& rng) { return agent_.act(obs, rng).chunk; }

// --- data -------------------------------------------------------------------

std::vector<Demonstration> generate_demos(const RunConfig& cfg, int* skipped) {
  const EnvConfig env = cfg.env_config();
  const TransformSet ts = cfg.demo_transforms();
  std::vector<Demonstration> demos;
  std::vector<std::uint64_t> bad;
  for (int i = 0; i < cfg.demos.count; ++i) {
    const std::uint64_t seed = cfg.demos.seed_offset + static_cast<std::uint64_t>(i);
    Rng trng(mix_seed(cfg.demos.transforms.seed, static_cast<std::uint64_t>(i)));
    const GroupElement g = ts.sample(trng);
    try {
      demos.push_back(expert_policy(reset(cfg.task, seed, g, env), env).demo);
    } catch (const InvalidArgument&) {
      bad.push_back(seed);
    }
  }
  if (skipped) *skipped = static_cast<int>(bad.size());
  if (bad.size() * 20 > static_cast<std::size_t>(cfg.demos.count)) {
    std::ostringstream os;
    os << "gen-demos: " << bad.size() << " of " << cfg.demos.count << " seeds are unsolvable:";
    for (auto s : bad) os << ' ' << s;
    throw InvalidArgument(os.str());
  }
  return demos;
}

std::vector<TrainingPair> training_pairs(const RunConfig& cfg, const std::vector<Demonstration>& demos) {
  KeyframeConfig kc;
  kc.dwell_ticks = cfg.env_config().dwell_ticks;
  std::vector<TrainingPair> out;
  for (const auto& d : demos) {
    auto p = make_training_pairs(d, cfg.mode, cfg.m, extract_keyframes(d, kc));
    out.insert(out.end(), std::make_move_iterator(p.begin()), std::make_move_iterator(p.end()));
  }
  return out;
}

std::vector<TrainingPair> load_training_pairs(const RunConfig& cfg, const Dataset& ds) {
  const auto& h = ds.header;
  if (h.kf != 3 || h.t_hist != cfg.t_hist || h.t_act != cfg.t_act)
    throw InvalidArgument("dataset header (kf=" + std::to_string(h.kf) + ", t_hist=" + std::to_string(h.t_hist) +
                          ", t_act=" + std::to_string(h.t_act) + ") does not match the config");
  if (ds.kind == RecordKind::TrainingPairs) {
    if (h.m != cfg.m) throw InvalidArgument("dataset horizon m=" + std::to_string(h.m) + " does not match the config");
    return ds.pairs;
  }
  for (const auto& d : ds.demos)
    if (d.task_id != to_string(cfg.task))
      throw InvalidArgument("dataset holds '" + d.task_id + "' demos but the config trains " + to_string(cfg.task));
  return training_pairs(cfg, ds.demos);
}

// --- trainer ----------------------------------------------------------------

Trainer::Trainer(Agent& agent, std::vector<TrainingPair> pairs) : agent_(agent), pairs_(std::move(pairs)) {
  if (pairs_.empty()) throw InvalidArgument("train: no training pairs");
  for (const auto& p : pairs_) {
    if (static_cast<int>(p.target_chunk.size()) != agent_.cfg.m)
      throw InvalidArgument("train: chunk length does not match m");
    targets_.push_back(make_target(agent_.high->config().grid, p.target_keypose));
  }
}

namespace {

void require_finite(double v, std::int64_t iter, const char* what) {
  if (!std::isfinite(v))
    throw NumericalError("training iteration " + std::to_string(iter) + ": " + what + " is not finite");
}

}  // namespace

StepStats Trainer::step() {
  const RunConfig& cfg = agent_.cfg;
  Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(iteration_)));
  const int n = static_cast<int>(pairs_.size());
  agent_.store.zero_grad();
  StepStats st;

  for (int b = 0; b < cfg.batch_high; ++b) {
    const auto i = static_cast<std::size_t>(rng.uniform_int(0, n - 1));
    nn::Graph<float> g;
    const nn::Var loss = g.scale(loss_high(g, agent_.high->forward(g, pairs_[i].obs.cloud), targets_[i]),
                                 1.0 / cfg.batch_high);
    st.loss_high += g.value(loss).data[0];
    g.backward(loss);
    g.accumulate_param_grads();
  }

  std::vector<const Observation*> obs;
  std::vector<const ActionChunk*> chunks;
  for (int b = 0; b < cfg.batch; ++b) {
    const auto i = static_cast<std::size_t>(rng.uniform_int(0, n - 1));
    obs.push_back(&pairs_[i].obs);
    chunks.push_back(&pairs_[i].target_chunk);
  }
  {
    const LowBatch batch = make_low_batch(agent_.low.cfg, agent_.low.sched, obs, chunks, rng);
    nn::Graph<float> g;
    const nn::Var loss = loss_low(g, *agent_.eps, batch);
    st.loss_low = g.value(loss).data[0];
    g.backward(loss);
    g.accumulate_param_grads();
  }

  st.grad_norm = agent_.store.grad_norm();
  require_finite(st.loss_high, iteration_ + 1, "loss_high");
  require_finite(st.loss_low, iteration_ + 1, "loss_low");
  require_finite(st.grad_norm, iteration_ + 1, "gradient norm");
  nn::adamw_step(agent_.store, adam_, cfg.optim);
  ++iteration_;
  return st;
}

StepStats Trainer::evaluate_losses(std::uint64_t seed, int draws) const {
  StepStats st;
  for (std::size_t i = 0; i < pairs_.size(); ++i) {
    nn::Graph<double> g;
    st.loss_high += g.value(loss_high(g, agent_.high->forward(g, pairs_[i].obs.cloud), targets_[i])).data[0];
  }
  st.loss_high /= static_cast<double>(pairs_.size());
  std::vector<const Observation*> obs;
  std::vector<const ActionChunk*> chunks;
  for (const auto& p : pairs_) {
    obs.push_back(&p.obs);
    chunks.push_back(&p.target_chunk);
  }
  for (int d = 0; d < draws; ++d) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(d)));
    const LowBatch batch = make_low_batch(agent_.low.cfg, agent_.low.sched, obs, chunks, rng);
    nn::Graph<double> g;
    st.loss_low += g.value(loss_low(g, *agent_.eps, batch)).data[0] / draws;
  }
  return st;
}

nn::Checkpoint Trainer::checkpoint() const {
  return nn::snapshot(agent_.store, adam_, iteration_, agent_.cfg.to_json());
}

void Trainer::resume(const nn::Checkpoint& ck) {
  load_agent(agent_, ck);
  nn::restore(ck, agent_.store, &adam_);
  iteration_ = ck.iteration;
}

void load_agent(Agent& agent, const nn::Checkpoint& ck) {
  RunConfig stored;
  try {
    stored = parse_run_config(ck.config_json);
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("checkpoint carries an invalid config: ") + e.what());
  }
  if (model_signature(stored) != model_signature(agent.cfg))
    throw InvalidArgument("checkpoint was trained with a different model config (ablation " +
                          to_string(stored.ablation) + ", u=" + std::to_string(stored.u) +
                          ", m=" + std::to_string(stored.m) + ", K=" + std::to_string(stored.K) + ")");
  nn::restore(ck, agent.store);
}

// --- training run -----------------------------------------------------------

namespace {

std::string num(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string ckpt_name(std::int64_t iter) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ckpt_%06lld.hepc", static_cast<long long>(iter));
  return buf;
}

}  // namespace

TrainResult run_training(Agent& agent, const std::vector<TrainingPair>& pairs, const std::string& resume_from,
                         const std::function<void(std::int64_t, const StepStats&)>& on_log) {
  const RunConfig& cfg = agent.cfg;
  Trainer trainer(agent, pairs);
  fs::create_directories(cfg.out);
  const fs::path out(cfg.out);
  const fs::path metrics = out / "metrics.csv";

  if (!resume_from.empty()) trainer.resume(nn::read_checkpoint(resume_from));
  std::ofstream csv;
  if (!resume_from.empty() && fs::exists(metrics)) {
    csv.open(metrics, std::ios::app);
  } else {
    csv.open(metrics, std::ios::trunc);
    csv << kMetricsCsvHeader << "\n";
  }
  if (!csv) throw InvalidArgument("cannot write " + metrics.string());

  const auto t0 = std::chrono::steady_clock::now();
  TrainResult res;
  while (trainer.iteration() < cfg.iterations) {
    const StepStats st = trainer.step();
    const std::int64_t it = trainer.iteration();
    res.last = st;
    if (it % cfg.log_every == 0 || it == 1 || it == cfg.iterations) {
      const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      csv << it << ',' << num(st.loss_high) << ',' << num(st.loss_low) << ',' << num(st.grad_norm) << ','
          << num(wall) << "\n";
      csv.flush();
      if (on_log) on_log(it, st);
    }
    if (it % cfg.checkpoint_every == 0) {
      const auto ck = trainer.checkpoint();
      nn::write_checkpoint((out / ckpt_name(it)).string(), ck);
      nn::write_checkpoint((out / "last.hepc").string(), ck);
    }
  }
  res.iterations = trainer.iteration();
  res.checkpoint = (out / "last.hepc").string();
  nn::write_checkpoint(res.checkpoint, trainer.checkpoint());
  return res;
}

// --- heatmap dump -----------------------------------------------------------

void write_heatmap(const std::string& path, const VoxelGrid& hm) {
  BinaryWriter w;
  w.magic("HEPH");
  w.u32(1);
  const auto& s = hm.spec();
  for (int a = 0; a < 3; ++a) w.f64(s.origin[a]);
  w.f64(s.resolution);
  for (int a = 0; a < 3; ++a) w.i32(s.dims[a]);
  w.i32(s.max_points_per_voxel);
  const RepSpec& r = hm.rep();
  w.i32(r.u);
  w.i32(r.n0);
  w.i32(r.n1);
  w.i32(r.nreg);
  w.u64(hm.data().size());
  for (double v : hm.data()) w.f64(v);
  w.write_file(path);
}

VoxelGrid read_heatmap(const std::string& path) {
  BinaryReader r = BinaryReader::from_file(path);
  const std::string magic = r.magic(4);
  if (magic != "HEPH") throw UnknownMagic("not a heatmap dump: magic '" + magic + "'");
  const std::uint32_t version = r.u32();
  if (version != 1) throw VersionMismatch("heatmap dump version " + std::to_string(version) + " (expected 1)");
  VoxelGridSpec s;
  for (int a = 0; a < 3; ++a) s.origin[a] = r.f64();
  s.resolution = r.f64();
  for (int a = 0; a < 3; ++a) s.dims[a] = r.i32();
  s.max_points_per_voxel = r.i32();
  RepSpec rep;
  rep.u = r.i32();
  rep.n0 = r.i32();
  rep.n1 = r.i32();
  rep.nreg = r.i32();
  s.validate();
  VoxelGrid hm(s, rep);
  const std::uint64_t n = r.u64();
  if (n != hm.data().size()) throw FormatError("heatmap dump: value count does not match the grid");
  for (auto& v : hm.data()) v = r.f64();
  if (!r.at_end()) throw FormatError("heatmap dump: trailing bytes");
  return hm;
}

}  // namespace hep

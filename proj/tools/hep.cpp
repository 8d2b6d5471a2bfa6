// hep: demo generation, training, evaluation, auditing and artifact inspection.
//
// Exit codes: 0 success, 1 usage or config error, 2 audit failure,
// 3 numerical abort.

#include <CLI11.hpp>
#include <algorithm>
#include <cctype>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "hep/audit.hpp"
#include "hep/container.hpp"
#include "hep/error.hpp"
#include "hep/train.hpp"

using namespace hep;
namespace fs = std::filesystem;

namespace {

constexpr int kUsage = 1;
constexpr int kAuditFailure = 2;
constexpr int kNumerical = 3;

struct Common {
  std::string config;
  std::vector<std::string> overrides;

  RunConfig load() const {
    if (config.empty()) return parse_run_config("{}", overrides);
    return load_run_config(config, overrides);
  }
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config, "run config (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--set", c.overrides, "override a config key: dotted.key=value (repeatable)");
}

std::string hex(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
  return buf;
}

std::string checkpoint_path(const RunConfig& cfg, const std::string& flag) {
  if (!flag.empty()) return flag;
  if (!cfg.checkpoint.empty()) return cfg.checkpoint;
  return (fs::path(cfg.out) / "last.hepc").string();
}

void ensure_parent(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

// --- commands ---------------------------------------------------------------

int cmd_gen_demos(const Common& common, const std::string& out_flag) {
  RunConfig cfg = common.load();
  if (!out_flag.empty()) cfg.dataset = out_flag;
  int skipped = 0;
  const auto demos = generate_demos(cfg, &skipped);
  const DatasetHeader h{3, cfg.m, cfg.t_hist, cfg.t_act};
  ensure_parent(cfg.dataset);
  write_dataset(cfg.dataset, h, demos);
  std::size_t frames = 0;
  for (const auto& d : demos) frames += d.frames.size();
  std::cout << "task " << to_string(cfg.task) << ": " << demos.size() << " demos, " << skipped << " skipped, "
            << frames << " frames\n"
            << "wrote " << cfg.dataset << " checksum " << hex(file_checksum(cfg.dataset)) << "\n";
  return 0;
}

int cmd_train(const Common& common, const std::string& dataset_flag, const std::string& resume) {
  RunConfig cfg = common.load();
  if (!dataset_flag.empty()) cfg.dataset = dataset_flag;
  const auto pairs = load_training_pairs(cfg, read_dataset(cfg.dataset));
  Agent agent(cfg);
  std::cout << "training " << to_string(cfg.task) << " (" << to_string(cfg.ablation) << ", " << to_string(cfg.mode)
            << ") on " << pairs.size() << " pairs, " << agent.store.count() << " parameters\n";
  auto log = [](std::int64_t it, const StepStats& s) {
    std::printf("iter %6lld  loss_high %.5f  loss_low %.5f  grad %.4g\n", static_cast<long long>(it), s.loss_high,
                s.loss_low, s.grad_norm);
    std::fflush(stdout);
  };
  const TrainResult r = run_training(agent, pairs, resume, log);
  std::cout << "wrote " << r.checkpoint << " checksum " << hex(file_checksum(r.checkpoint)) << "\n";
  return 0;
}

int cmd_eval(const Common& common, const std::string& policy_name, const std::string& ckpt_flag,
             const std::string& csv_flag, const std::string& heatmap) {
  const RunConfig cfg = common.load();
  const EnvConfig env = cfg.env_config();
  std::unique_ptr<Agent> agent;
  std::unique_ptr<Policy> policy;
  if (policy_name == "agent") {
    agent = std::make_unique<Agent>(cfg);
    load_agent(*agent, nn::read_checkpoint(checkpoint_path(cfg, ckpt_flag)));
    policy = std::make_unique<AgentPolicy>(*agent);
  } else if (policy_name == "expert") {
    policy = std::make_unique<ExpertAsPolicy>(cfg.m, env);
  } else {
    policy = std::make_unique<RandomPolicy>(cfg.m, env);
  }

  if (!heatmap.empty()) {
    if (!agent) throw InvalidArgument("--heatmap needs the agent policy");
    const Observation o = observe(reset(cfg.task, cfg.eval.seed_offset, GroupElement::identity(cfg.u), env), env);
    const VoxelGrid hm = high_forward(*agent->high, o);
    ensure_parent(heatmap);
    write_heatmap(heatmap, hm);
    const Vec3 k = select_keypose(hm);
    std::cout << "heatmap of seed " << cfg.eval.seed_offset << " -> " << heatmap << ", keypose (" << k.x() << ", "
              << k.y() << ", " << k.z() << ")\n";
  }

  const EvalReport rep = evaluate(*policy, cfg.task, cfg.eval_options(), env);
  const std::string csv = csv_flag.empty() ? (fs::path(cfg.out) / "eval.csv").string() : csv_flag;
  ensure_parent(csv);
  std::ofstream(csv, std::ios::binary) << rep.csv();
  const auto [lo, hi] = rep.interval();
  const auto ok = std::count_if(rep.rows.begin(), rep.rows.end(), [](const EpisodeRow& r) { return r.success; });
  std::printf("%s %s (%s): success rate %.3f (%ld/%zu), 95%% interval [%.3f, %.3f]\n", to_string(cfg.task).c_str(),
              policy_name.c_str(), to_string(cfg.mode).c_str(), rep.rate(), static_cast<long>(ok), rep.rows.size(), lo,
              hi);
  std::cout << "wrote " << csv << " checksum " << hex(file_checksum(csv)) << "\n";
  return 0;
}

int cmd_audit(const Common& common, const std::string& ckpt_flag, const AuditOptions& opt, const std::string& corrupt,
              const std::string& report_path) {
  const RunConfig cfg = common.load();
  Agent agent(cfg);
  const std::string ckpt = ckpt_flag.empty() ? cfg.checkpoint : ckpt_flag;
  if (!ckpt.empty()) {
    load_agent(agent, nn::read_checkpoint(ckpt));
    std::cout << "weights: " << ckpt << "\n";
  } else {
    std::cout << "weights: random (seed " << cfg.seed << ")\n";
  }
  if (!corrupt.empty()) std::cout << "corrupted tied weight " << corrupt_tied_weight(agent.store, corrupt, opt.seed) << "\n";

  const AuditReport r = run_audit(agent, opt);
  for (const auto& c : r.checks) {
    std::printf("%-4s %-20s residual %-12.4g tolerance %-8.2g n=%d%s%s\n", c.pass() ? "ok" : "FAIL", c.name.c_str(),
                c.residual, c.tolerance, c.compared, c.note.empty() ? "" : "  ", c.note.c_str());
  }
  if (!report_path.empty()) {
    ensure_parent(report_path);
    std::ofstream(report_path, std::ios::binary) << r.csv();
  }
  if (const AuditCheck* bad = r.first_failure()) {
    std::cerr << "audit failed: " << bad->name << " residual " << bad->residual << " exceeds " << bad->tolerance
              << "\n";
    return kAuditFailure;
  }
  std::cout << "audit passed (" << r.checks.size() << " checks)\n";
  return 0;
}

void print_state_summary(const Dataset& ds) {
  std::map<std::string, int> tasks;
  std::size_t frames = 0, points = 0, observations = 0;
  for (const auto& d : ds.demos) {
    ++tasks[d.task_id];
    frames += d.frames.size();
    for (const auto& f : d.frames) points += f.obs.cloud.size();
    observations += d.frames.size();
  }
  for (const auto& p : ds.pairs) points += p.obs.cloud.size();
  observations += ds.pairs.size();
  for (const auto& [t, n] : tasks) std::cout << "  task " << t << ": " << n << " demos\n";
  if (!ds.demos.empty())
    std::cout << "  frames: " << frames << " (mean " << static_cast<double>(frames) / ds.demos.size() << " per demo)\n";
  if (observations) std::cout << "  mean points per observation: " << static_cast<double>(points) / observations << "\n";
}

int cmd_inspect(const std::string& path) {
  const std::string magic = read_magic(path);
  std::cout << path << "\n  checksum " << hex(file_checksum(path)) << "\n";
  if (magic == "HEPD") {
    const Dataset ds = read_dataset(path);
    const auto& h = ds.header;
    std::cout << "  dataset v" << kDatasetVersion << ", "
              << (ds.kind == RecordKind::Demonstrations ? "demonstrations" : "training pairs") << "\n"
              << "  kf " << h.kf << ", m " << h.m << ", t_hist " << h.t_hist << ", t_act " << h.t_act << "\n"
              << "  records " << (ds.kind == RecordKind::Demonstrations ? ds.demos.size() : ds.pairs.size()) << "\n";
    print_state_summary(ds);
  } else if (magic == "HEPC") {
    const nn::Checkpoint ck = nn::read_checkpoint(path);
    std::size_t total = 0;
    for (const auto& b : ck.blocks) total += b.value.size();
    std::cout << "  checkpoint v" << nn::kCheckpointVersion << ", iteration " << ck.iteration << ", optimizer step "
              << ck.adam.step << (ck.adam.m.empty() ? ", no moments" : ", with moments") << "\n";
    try {
      const RunConfig cfg = parse_run_config(ck.config_json);
      std::cout << "  task " << to_string(cfg.task) << ", ablation " << to_string(cfg.ablation) << ", mode "
                << to_string(cfg.mode) << "\n";
    } catch (const InvalidArgument& e) {
      std::cout << "  config: unreadable (" << e.what() << ")\n";
    }
    std::cout << "  " << ck.blocks.size() << " blocks, " << total << " values\n";
    for (const auto& b : ck.blocks) {
      std::string shape;
      for (int d : b.shape) shape += (shape.empty() ? "" : "x") + std::to_string(d);
      std::printf("  %-28s %-14s %-6s", b.name.c_str(), shape.c_str(), nn::to_string(b.tying.kind).c_str());
      if (b.tying.kind != nn::TyingKind::None)
        std::printf(" in(n0=%d n1=%d nreg=%d) out(n0=%d n1=%d nreg=%d)", b.tying.in.n0, b.tying.in.n1,
                    b.tying.in.nreg, b.tying.out.n0, b.tying.out.n1, b.tying.out.nreg);
      std::printf("\n");
    }
  } else if (magic == "HEPH") {
    const VoxelGrid hm = read_heatmap(path);
    const auto& s = hm.spec();
    const std::size_t best = argmax_voxel(hm);
    const VoxelIndex j = s.unravel(best);
    const Vec3 k = select_keypose(hm);
    const auto [mn, mx] = std::minmax_element(hm.data().begin(), hm.data().end());
    std::printf("  heatmap grid %dx%dx%d, resolution %g, origin (%g, %g, %g)\n", s.dims[0], s.dims[1], s.dims[2],
                s.resolution, s.origin.x(), s.origin.y(), s.origin.z());
    std::printf("  logits min %.6g max %.6g, argmax linear %zu voxel (%d, %d, %d) margin %.6g\n", *mn, *mx, best, j[0],
                j[1], j[2], argmax_margin(hm));
    std::printf("  keypose (%g, %g, %g)\n", k.x(), k.y(), k.z());
  } else {
    std::string shown;
    for (unsigned char ch : magic) {
      char buf[8];
      std::snprintf(buf, sizeof buf, std::isprint(ch) ? "%c" : "\\x%02x", ch);
      shown += buf;
    }
    throw UnknownMagic("unknown file magic '" + shown + "' (expected HEPD, HEPC or HEPH)");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hep: equivariant hierarchical policy toolkit"};
  app.require_subcommand(1);

  Common common;
  std::string out_flag, dataset_flag, resume, policy = "agent", ckpt, csv, heatmap, corrupt, report, path;
  AuditOptions audit_opt;
  bool no_grad = false;

  auto* gen = app.add_subcommand("gen-demos", "generate expert demonstrations");
  add_common(gen, common);
  gen->add_option("-o,--out", out_flag, "dataset path (default: paths.dataset)");

  auto* train = app.add_subcommand("train", "train both levels on a dataset");
  add_common(train, common);
  train->add_option("--dataset", dataset_flag, "dataset path (default: paths.dataset)");
  train->add_option("--resume", resume, "checkpoint to resume from")->check(CLI::ExistingFile);

  auto* eval = app.add_subcommand("eval", "evaluate a policy on the benchmark");
  add_common(eval, common);
  eval->add_option("--policy", policy, "agent|expert|random")->check(CLI::IsMember({"agent", "expert", "random"}));
  eval->add_option("--checkpoint", ckpt, "checkpoint (default: paths.checkpoint or <out>/last.hepc)");
  eval->add_option("--csv", csv, "evaluation CSV (default: <out>/eval.csv)");
  eval->add_option("--heatmap", heatmap, "also dump the heatmap of the first evaluation seed");

  auto* audit = app.add_subcommand("audit", "run the equivariance and gradient invariant suite");
  add_common(audit, common);
  audit->add_option("--checkpoint", ckpt, "checkpoint (default: random weights)");
  audit->add_option("--seed", audit_opt.seed, "audit seed");
  audit->add_option("--scenes", audit_opt.scenes, "environment scenes")->check(CLI::PositiveNumber);
  audit->add_option("--clouds", audit_opt.clouds, "random clouds for the stacked-voxel check")->check(CLI::PositiveNumber);
  audit->add_option("--grad-samples", audit_opt.grad_samples, "parameters for the gradient check")
      ->check(CLI::PositiveNumber);
  audit->add_flag("--no-grad", no_grad, "skip the gradient check");
  audit->add_option("--corrupt", corrupt, "mutation test: untie and perturb the first tied weight with this prefix");
  audit->add_option("--report", report, "write the report CSV here");

  auto* inspect = app.add_subcommand("inspect", "print a dataset, checkpoint or heatmap dump");
  inspect->add_option("path", path, "file")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }

  try {
    if (*gen) return cmd_gen_demos(common, out_flag);
    if (*train) return cmd_train(common, dataset_flag, resume);
    if (*eval) return cmd_eval(common, policy, ckpt, csv, heatmap);
    if (*audit) {
      audit_opt.gradients = !no_grad;
      return cmd_audit(common, ckpt, audit_opt, corrupt, report);
    }
    if (*inspect) return cmd_inspect(path);
  } catch (const NumericalError& e) {
    std::cerr << "numerical abort: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}

#include "hep/run_config.hpp"

#include <json.hpp>
#include <set>
#include <sstream>

#include "hep/container.hpp"
#include "hep/error.hpp"

namespace hep {

using nlohmann::json;

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::Full: return "full";
    case Ablation::NoFT: return "no-ft";
    case Ablation::NoEqui: return "no-equi";
    case Ablation::NoStackedVoxel: return "no-stacked-voxel";
  }
  return "?";
}

Ablation ablation_from_string(const std::string& s) {
  for (Ablation a : {Ablation::Full, Ablation::NoFT, Ablation::NoEqui, Ablation::NoStackedVoxel})
    if (to_string(a) == s) return a;
  throw InvalidArgument("unknown ablation '" + s + "' (expected full|no-ft|no-equi|no-stacked-voxel)");
}

namespace {

/// Reads keys of one JSON object and remembers which were used so leftovers
/// can be reported.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw InvalidArgument("config: '" + path_ + "' must be an object");
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions()) return;
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) throw InvalidArgument("config: unknown key '" + name(it.key()) + "'");
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    used_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw InvalidArgument("config: bad value for '" + name(key) + "': " + e.what());
    }
  }
  bool has(const std::string& key) const { return j_.contains(key); }
  const json& sub(const std::string& key) {
    used_.insert(key);
    return j_.at(key);
  }
  std::string name(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

std::vector<Vec3> parse_translations(const json& j, const std::string& where) {
  std::vector<Vec3> out;
  if (j.is_object()) {
    Section s(j, where);
    int n = 0;
    double step = 0.125;
    bool center = true;
    s.get("grid", n);
    s.get("step", step);
    s.get("include_center", center);
    if (n < 0 || !(step > 0)) throw InvalidArgument("config: '" + where + "' needs grid >= 0 and step > 0");
    return TransformSet::grid(n, step, center);
  }
  if (!j.is_array()) throw InvalidArgument("config: '" + where + "' must be a list of [x, y, z] or a grid object");
  for (const auto& t : j) {
    if (!t.is_array() || t.size() != 3) throw InvalidArgument("config: '" + where + "' entries must be [x, y, z]");
    out.emplace_back(t[0].get<double>(), t[1].get<double>(), t[2].get<double>());
  }
  return out;
}

json translations_json(const std::vector<Vec3>& ts) {
  json a = json::array();
  for (const auto& t : ts) a.push_back({t.x(), t.y(), t.z()});
  return a;
}

void parse_transforms(Section& s, TransformConfig& t) {
  s.get("rotations", t.rotations);
  s.get("transform_seed", t.seed);
  if (s.has("translations")) t.translations = parse_translations(s.sub("translations"), s.name("translations"));
}

template <typename E, typename F>
void get_enum(Section& s, const std::string& key, E& out, F from_string) {
  std::string v;
  s.get(key, v);
  if (!v.empty()) out = from_string(v);
}

void apply_override(json& root, const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0) throw InvalidArgument("--set expects key=value, got '" + kv + "'");
  const std::string key = kv.substr(0, eq), text = kv.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;
  }
  json* node = &root;
  std::stringstream ss(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->contains(parts[i])) (*node)[parts[i]] = json::object();
    node = &(*node)[parts[i]];
    if (!node->is_object()) throw InvalidArgument("--set: '" + key + "' does not name a config key");
  }
  (*node)[parts.back()] = value;
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text, const std::vector<std::string>& overrides) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("config: invalid JSON: ") + e.what());
  }
  for (const auto& o : overrides) apply_override(root, o);

  RunConfig c;
  {
    Section s(root, "");
    get_enum(s, "task", c.task, task_from_string);
    get_enum(s, "mode", c.mode, control_mode_from_string);
    get_enum(s, "ablation", c.ablation, ablation_from_string);
    s.get("seed", c.seed);
    if (s.has("grid")) {
      Section g(s.sub("grid"), "grid");
      g.get("resolution", c.resolution);
      g.get("nxy", c.nxy);
      g.get("nz", c.nz);
      g.get("z_min", c.z_min);
      g.get("max_points", c.max_points);
    }
    if (s.has("model")) {
      Section m(s.sub("model"), "model");
      m.get("u", c.u);
      m.get("m", c.m);
      m.get("t_hist", c.t_hist);
      m.get("t_act", c.t_act);
      m.get("K", c.K);
      if (m.has("high")) {
        Section h(m.sub("high"), "model.high");
        h.get("encoder_hidden", c.encoder_hidden);
        h.get("encoder_out", c.encoder_out);
        h.get("unet_widths", c.unet_widths);
        h.get("kernel", c.kernel);
        get_enum(h, "padding", c.padding, nn::padding_from_string);
      }
      if (m.has("low")) {
        Section l(m.sub("low"), "model.low");
        l.get("obs_hidden", c.obs_hidden);
        l.get("obs_out", c.obs_out);
        l.get("hidden", c.hidden);
        l.get("layers", c.layers);
        l.get("time_dim", c.time_dim);
        l.get("beta_1", c.beta_1);
        l.get("beta_K", c.beta_K);
        l.get("crop", c.crop);
        l.get("pos_scale", c.pos_scale);
        std::string target;
        l.get("target", target);
        if (target == "epsilon") c.target = LowLevelConfig::Target::Epsilon;
        else if (target == "sample") c.target = LowLevelConfig::Target::Sample;
        else if (!target.empty()) throw InvalidArgument("config: model.low.target must be epsilon|sample");
      }
    }
    if (s.has("optim")) {
      Section o(s.sub("optim"), "optim");
      o.get("lr", c.optim.lr);
      o.get("wd", c.optim.wd);
      std::vector<double> betas = {c.optim.beta1, c.optim.beta2};
      o.get("betas", betas);
      if (betas.size() != 2) throw InvalidArgument("config: 'optim.betas' needs two values");
      c.optim.beta1 = betas[0];
      c.optim.beta2 = betas[1];
      o.get("eps", c.optim.eps);
      o.get("batch", c.batch);
      o.get("batch_high", c.batch_high);
      o.get("iterations", c.iterations);
      o.get("checkpoint_every", c.checkpoint_every);
      o.get("log_every", c.log_every);
    }
    if (s.has("demos")) {
      Section d(s.sub("demos"), "demos");
      d.get("count", c.demos.count);
      d.get("seed_offset", c.demos.seed_offset);
      parse_transforms(d, c.demos.transforms);
    }
    if (s.has("eval")) {
      Section e(s.sub("eval"), "eval");
      e.get("episodes", c.eval.episodes);
      e.get("seed_offset", c.eval.seed_offset);
      e.get("policy_seed", c.eval.policy_seed);
      e.get("replan", c.eval.replan);
      e.get("fixed_seed", c.eval.fixed_seed);
      parse_transforms(e, c.eval.transforms);
      if (e.has("fixed_transforms")) {
        for (const auto& ft : e.sub("fixed_transforms")) {
          Section f(ft, "eval.fixed_transforms[]");
          int m = 0;
          std::vector<double> t = {0, 0, 0};
          f.get("m", m);
          f.get("t", t);
          if (t.size() != 3) throw InvalidArgument("config: 'eval.fixed_transforms[].t' needs 3 values");
          c.eval.fixed_transforms.push_back({Vec3(t[0], t[1], t[2]), m, c.u});
        }
      }
    }
    if (s.has("paths")) {
      Section p(s.sub("paths"), "paths");
      p.get("dataset", c.dataset);
      p.get("out", c.out);
      p.get("checkpoint", c.checkpoint);
    }
  }
  for (auto& g : c.eval.fixed_transforms) g.u = c.u;
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides) {
  const auto bytes = read_file_bytes(path);
  return parse_run_config(std::string(bytes.begin(), bytes.end()), overrides);
}

std::string RunConfig::to_json() const {
  auto fixed = json::array();
  for (const auto& g : eval.fixed_transforms) fixed.push_back({{"m", g.m}, {"t", {g.t.x(), g.t.y(), g.t.z()}}});
  const json j = {
      {"task", to_string(task)},
      {"mode", hep::to_string(mode)},
      {"ablation", hep::to_string(ablation)},
      {"seed", seed},
      {"grid", {{"resolution", resolution}, {"nxy", nxy}, {"nz", nz}, {"z_min", z_min}, {"max_points", max_points}}},
      {"model",
       {{"u", u},
        {"m", m},
        {"t_hist", t_hist},
        {"t_act", t_act},
        {"K", K},
        {"high",
         {{"encoder_hidden", encoder_hidden},
          {"encoder_out", encoder_out},
          {"unet_widths", unet_widths},
          {"kernel", kernel},
          {"padding", nn::to_string(padding)}}},
        {"low",
         {{"obs_hidden", obs_hidden},
          {"obs_out", obs_out},
          {"hidden", hidden},
          {"layers", layers},
          {"time_dim", time_dim},
          {"beta_1", beta_1},
          {"beta_K", beta_K},
          {"crop", crop},
          {"pos_scale", pos_scale},
          {"target", target == LowLevelConfig::Target::Sample ? "sample" : "epsilon"}}}}},
      {"optim",
       {{"lr", optim.lr},
        {"wd", optim.wd},
        {"betas", {optim.beta1, optim.beta2}},
        {"eps", optim.eps},
        {"batch", batch},
        {"batch_high", batch_high},
        {"iterations", iterations},
        {"checkpoint_every", checkpoint_every},
        {"log_every", log_every}}},
      {"demos",
       {{"count", demos.count},
        {"seed_offset", demos.seed_offset},
        {"rotations", demos.transforms.rotations},
        {"translations", translations_json(demos.transforms.translations)},
        {"transform_seed", demos.transforms.seed}}},
      {"eval",
       {{"episodes", eval.episodes},
        {"seed_offset", eval.seed_offset},
        {"policy_seed", eval.policy_seed},
        {"replan", eval.replan},
        {"fixed_seed", eval.fixed_seed},
        {"rotations", eval.transforms.rotations},
        {"translations", translations_json(eval.transforms.translations)},
        {"transform_seed", eval.transforms.seed},
        {"fixed_transforms", fixed}}},
      {"paths", {{"dataset", dataset}, {"out", out}, {"checkpoint", checkpoint}}},
  };
  return j.dump(2);
}

std::string model_signature(const RunConfig& c) {
  json j = json::parse(c.to_json());
  return json{{"ablation", j["ablation"]}, {"grid", j["grid"]}, {"model", j["model"]}}.dump();
}

namespace {

RepSpec rep_from(const std::vector<int>& v, int u) { return {u, v[0], v[1], v[2]}; }

void require(bool ok, const std::string& msg) {
  if (!ok) throw InvalidArgument("config: " + msg);
}

}  // namespace

HighLevelConfig RunConfig::high_config() const {
  HighLevelConfig h;
  h.grid = VoxelGridSpec::centered(resolution, nxy, nz, z_min, max_points);
  h.u = u;
  h.encoder_hidden = encoder_hidden;
  h.encoder_out = rep_from(encoder_out, u);
  h.unet_widths = unet_widths;
  h.kernel = kernel;
  h.padding = padding;
  h.stacked = ablation != Ablation::NoStackedVoxel;
  h.tied = ablation != Ablation::NoEqui;
  return h;
}

LowLevelConfig RunConfig::low_config() const {
  LowLevelConfig l;
  l.m = m;
  l.t_hist = t_hist;
  l.t_act = t_act;
  l.u = u;
  l.pos_scale = pos_scale;
  l.crop = crop;
  l.obs_hidden = obs_hidden;
  l.obs_out = rep_from(obs_out, u);
  l.hidden = hidden;
  l.layers = layers;
  l.time_dim = time_dim;
  l.K = K;
  l.beta_1 = beta_1;
  l.beta_K = beta_K;
  l.frame_transfer = ablation != Ablation::NoFT;
  l.tied = ablation != Ablation::NoEqui;
  l.target = target;
  return l;
}

EnvConfig RunConfig::env_config() const {
  EnvConfig e;
  e.workspace = VoxelGridSpec::centered(resolution, nxy, nz, z_min, max_points);
  e.t_hist = t_hist;
  e.t_act = t_act;
  return e;
}

namespace {

TransformSet to_set(const TransformConfig& t, int u) {
  TransformSet s;
  s.u = u;
  s.rotations = t.rotations;
  s.translations = t.translations;
  return s;
}

}  // namespace

EvalOptions RunConfig::eval_options() const {
  EvalOptions o;
  o.episodes = eval.episodes;
  o.seed_offset = eval.seed_offset;
  o.transform_seed = eval.transforms.seed;
  o.policy_seed = eval.policy_seed;
  o.mode = mode;
  o.transforms = to_set(eval.transforms, u);
  o.fixed_transforms = eval.fixed_transforms;
  o.fixed_seed = eval.fixed_seed;
  return o;
}

TransformSet RunConfig::demo_transforms() const { return to_set(demos.transforms, u); }

void RunConfig::validate() const {
  require(resolution > 0 && nxy > 0 && nz > 0 && max_points > 0, "grid needs positive resolution, sizes and max_points");
  require(u >= 1 && 4 % u == 0, "model.u must divide 4 (quarter-turn grids)");
  require(m >= 1, "model.m must be >= 1");
  require(t_hist >= 1 && t_act >= 1, "model.t_hist and model.t_act must be >= 1");
  require(K >= 1, "model.K must be >= 1");
  require(encoder_out.size() == 3 && obs_out.size() == 3, "encoder_out/obs_out are [n0, n1, nreg]");
  require(optim.lr > 0 && optim.wd >= 0 && optim.eps > 0, "optim.lr/eps must be positive, wd non-negative");
  require(optim.beta1 >= 0 && optim.beta1 < 1 && optim.beta2 >= 0 && optim.beta2 < 1, "optim.betas must be in [0, 1)");
  require(batch >= 1 && batch_high >= 1, "optim.batch and optim.batch_high must be >= 1");
  require(iterations >= 0, "optim.iterations must be >= 0");
  require(checkpoint_every >= 1 && log_every >= 1, "optim.checkpoint_every and optim.log_every must be >= 1");
  require(demos.count >= 0 && eval.episodes >= 0, "demos.count and eval.episodes must be >= 0");
  require(eval.replan >= 1, "eval.replan must be >= 1");
  for (const auto* t : {&demos.transforms, &eval.transforms}) {
    require(!t->rotations.empty() && !t->translations.empty(), "transform sets need rotations and translations");
    for (int r : t->rotations) require(r >= 0 && r < u, "rotation indices must be in 0..u-1");
  }
  for (const auto& g : eval.fixed_transforms) require(g.m >= 0 && g.m < u, "fixed transform rotation out of range");
  require(!out.empty(), "paths.out must be set");
  high_config().validate();
  low_config().validate();
}

}  // namespace hep

#include "dts/pipeline.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "dts/parallel.hpp"

namespace dts {

namespace fs = std::filesystem;

namespace {

// "manifest" is what write_manifest adds, so a run manifest can be fed back in as a config.
const std::set<std::string> kSections{"run",     "geometry", "phantom", "simulation", "recon",
                                      "dataset", "network",  "train",   "loss",       "manifest"};

std::size_t positive(const KeyValueFile& kv, const std::string& sec, const std::string& key, std::size_t dflt) {
  if (!kv.has(sec, key)) return dflt;
  long long v = kv.get_int(sec, key);
  if (v <= 0) fail(ErrorKind::config, "[" + sec + "] " + key + " must be positive");
  return static_cast<std::size_t>(v);
}

double number(const KeyValueFile& kv, const std::string& sec, const std::string& key, double dflt) {
  return kv.has(sec, key) ? kv.get_double(sec, key) : dflt;
}

bool flag(const KeyValueFile& kv, const std::string& sec, const std::string& key, bool dflt) {
  auto v = kv.get(sec, key);
  if (!v) return dflt;
  if (*v == "1" || *v == "true" || *v == "yes") return true;
  if (*v == "0" || *v == "false" || *v == "no") return false;
  fail(ErrorKind::config, "[" + sec + "] " + key + " must be true or false");
}

std::string blocks_str(const nn::ConvNetSpec& s) {
  std::string out;
  for (std::size_t i = 0; i < s.blocks.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(s.blocks[i].channels) + "x" + std::to_string(s.blocks[i].kernel);
  }
  return out;
}

nn::ConvNetSpec network(const KeyValueFile& kv, const std::string& name, nn::ConvNetSpec base) {
  std::string blocks = kv.get("network", name + "_blocks").value_or(blocks_str(base));
  bool pool = flag(kv, "network", name + "_pool", base.pool);
  try {
    return nn::ConvNetSpec::parse("dims=" + std::to_string(base.dims) + " in=" + std::to_string(base.in_channels) +
                                  " blocks=" + blocks + " out=1 pool=" + (pool ? "1" : "0"));
  } catch (const Error& e) {
    fail(ErrorKind::config, "[network] " + name + ": " + e.what());
  }
}

std::string alpha_label(double alpha) {
  std::ostringstream os;
  os << alpha;
  return os.str();
}

}  // namespace

RunConfig RunConfig::parse(const KeyValueFile& kv) {
  for (const auto& [name, sec] : kv.sections())
    if (!kSections.count(name))
      fail(ErrorKind::config, name.empty() ? "keys outside a [section]" : "unknown section [" + name + "]");

  RunConfig c;
  kv.reject_unknown("run", {"seed", "threads", "alphas", "views_15", "views_30", "export_png"});
  if (kv.has("run", "seed")) c.seed = static_cast<std::uint64_t>(kv.get_int("run", "seed"));
  if (kv.has("run", "threads")) c.threads = static_cast<int>(kv.get_int("run", "threads"));
  if (auto a = kv.get("run", "alphas")) {
    c.alphas.clear();
    for (const auto& item : split(*a, ',')) {
      try {
        c.alphas.push_back(std::stod(item));
      } catch (const std::exception&) {
        fail(ErrorKind::config, "[run] alphas: bad value '" + item + "'");
      }
    }
  }
  c.views_15 = positive(kv, "run", "views_15", c.views_15);
  c.views_30 = positive(kv, "run", "views_30", c.views_30);
  c.export_png = flag(kv, "run", "export_png", c.export_png);

  if (kv.has("geometry", "alpha_deg") || kv.has("geometry", "n_views"))
    fail(ErrorKind::config, "[geometry] angles come from [run] alphas and views_15 / views_30");
  c.geometry = read_geometry(kv, "geometry");

  PhantomConfig base;
  base.shape = c.geometry.volume_shape;
  base.fov_mm = c.geometry.fov_mm;
  c.phantom = read_phantom_config(kv, "phantom", base);
  c.simulation = read_simulation_config(kv, "simulation", "recon");

  kv.reject_unknown("dataset", {"n_train", "n_test", "base_seed"});
  c.n_train = positive(kv, "dataset", "n_train", c.n_train);
  c.n_test = positive(kv, "dataset", "n_test", c.n_test);
  if (kv.has("dataset", "base_seed")) c.base_seed = static_cast<std::uint64_t>(kv.get_int("dataset", "base_seed"));

  kv.reject_unknown("network", {"m2d_blocks", "m3d_blocks", "f_blocks", "m2d_pool", "m3d_pool", "f_pool"});
  c.networks.m2d = network(kv, "m2d", c.networks.m2d);
  c.networks.m3d = network(kv, "m3d", c.networks.m3d);
  c.networks.f = network(kv, "f", c.networks.f);

  kv.reject_unknown("train", {"lr", "steps", "batch_2d", "batch_3d", "patch"});
  c.lr = number(kv, "train", "lr", c.lr);
  if (kv.has("train", "steps")) {
    long long s = kv.get_int("train", "steps");
    if (s < 0) fail(ErrorKind::config, "[train] steps must be >= 0");
    c.steps = static_cast<std::size_t>(s);
  }
  c.batch_2d = positive(kv, "train", "batch_2d", c.batch_2d);
  c.batch_3d = positive(kv, "train", "batch_3d", c.batch_3d);
  if (auto p = kv.get("train", "patch")) {
    auto parts = split(*p, ',');
    if (parts.size() != 3) fail(ErrorKind::config, "[train] patch needs three comma-separated extents");
    for (int a = 0; a < 3; ++a) {
      try {
        long long v = std::stoll(parts[a]);
        if (v <= 0) throw std::out_of_range(parts[a]);
        c.patch[a] = static_cast<std::size_t>(v);
      } catch (const std::exception&) {
        fail(ErrorKind::config, "[train] patch: bad extent '" + parts[a] + "'");
      }
    }
  }

  kv.reject_unknown("loss", {"l2d", "l3d", "lm"});
  c.weights.l2d = number(kv, "loss", "l2d", c.weights.l2d);
  c.weights.l3d = number(kv, "loss", "l3d", c.weights.l3d);
  c.weights.lm = number(kv, "loss", "lm", c.weights.lm);

  c.validate();
  return c;
}

RunConfig RunConfig::load(const fs::path& path) { return parse(KeyValueFile::load(path)); }

void RunConfig::validate() const {
  if (alphas.empty()) fail(ErrorKind::config, "[run] alphas is empty");
  for (double a : alphas)
    if (a != 15.0 && a != 30.0) fail(ErrorKind::config, "[run] alphas: only 15 and 30 are supported");
  if (threads < 0) fail(ErrorKind::config, "[run] threads must be >= 0");
  try {
    phantom.validate();
    networks.validate();
    for (double a : alphas) geometry_for(a).validate();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::config) throw;
    fail(ErrorKind::config, e.what());
  }
  if (!(lr >= 0.0) || !std::isfinite(lr)) fail(ErrorKind::config, "[train] lr must be >= 0");
  for (double w : {weights.l2d, weights.l3d, weights.lm})
    if (!(w > 0.0) || !std::isfinite(w)) fail(ErrorKind::config, "[loss] weights must be positive");
  for (const auto* s : {&networks.m3d, &networks.f})
    if (s->pool)
      for (std::size_t a = 0; a < 3; ++a)
        if (std::min(patch[a], geometry.volume_shape[a]) % 2)
          fail(ErrorKind::config, "[train] patch extents must be even when a 3D network pools");
}

KeyValueFile RunConfig::to_kv() const {
  KeyValueFile kv;
  std::string a;
  for (std::size_t i = 0; i < alphas.size(); ++i) a += (i ? "," : "") + format_double(alphas[i]);
  kv.set("run", "alphas", a);
  kv.set("run", "views_15", std::to_string(views_15));
  kv.set("run", "views_30", std::to_string(views_30));
  kv.set("run", "seed", std::to_string(seed));
  kv.set("run", "threads", std::to_string(threads));
  kv.set("run", "export_png", export_png ? "true" : "false");
  write_geometry(kv, "geometry", geometry);
  // Angles are per-alpha; keep the echo parseable by RunConfig::parse.
  auto sections = kv.sections();
  KeyValueFile out;
  for (const auto& [name, sec] : sections)
    for (const auto& [k, v] : sec)
      if (!(name == "geometry" && (k == "alpha_deg" || k == "n_views"))) out.set(name, k, v);
  write_phantom_config(out, "phantom", phantom);
  write_simulation_config(out, "simulation", "recon", simulation);
  out.set("dataset", "n_train", std::to_string(n_train));
  out.set("dataset", "n_test", std::to_string(n_test));
  out.set("dataset", "base_seed", std::to_string(base_seed));
  for (auto [name, spec] : {std::pair{"m2d", &networks.m2d}, {"m3d", &networks.m3d}, {"f", &networks.f}}) {
    out.set("network", std::string(name) + "_blocks", blocks_str(*spec));
    out.set("network", std::string(name) + "_pool", spec->pool ? "true" : "false");
  }
  out.set("train", "lr", format_double(lr));
  out.set("train", "steps", std::to_string(steps));
  out.set("train", "batch_2d", std::to_string(batch_2d));
  out.set("train", "batch_3d", std::to_string(batch_3d));
  out.set("train", "patch",
          std::to_string(patch[0]) + "," + std::to_string(patch[1]) + "," + std::to_string(patch[2]));
  out.set("loss", "l2d", format_double(weights.l2d));
  out.set("loss", "l3d", format_double(weights.l3d));
  out.set("loss", "lm", format_double(weights.lm));
  return out;
}

ConeBeamGeometry RunConfig::geometry_for(double alpha) const {
  if (alpha != 15.0 && alpha != 30.0) fail(ErrorKind::invalid_argument, "alpha must be 15 or 30");
  ConeBeamGeometry g = geometry;
  g.angles = make_angle_set(alpha, alpha == 15.0 ? views_15 : views_30);
  return g;
}

TrainConfig RunConfig::train_config(Stage stage) const {
  TrainConfig t;
  t.stage = stage;
  t.lr = lr;
  t.steps = steps;
  t.batch = stage == Stage::m2d ? batch_2d : batch_3d;
  t.patch = patch;
  t.seed = seed * 31 + static_cast<std::uint64_t>(stage) + 1;
  t.threads = threads;
  return t;
}

RunConfig resolve(RunConfig cfg, const RunOptions& opts) {
  if (opts.seed) cfg.seed = *opts.seed;
  if (opts.threads) {
    if (*opts.threads < 0) fail(ErrorKind::invalid_argument, "--threads must be >= 0");
    cfg.threads = *opts.threads;
  }
  return cfg;
}

std::vector<double> selected_alphas(const RunConfig& cfg, const RunOptions& opts) {
  if (!opts.alpha) return cfg.alphas;
  if (*opts.alpha != 15.0 && *opts.alpha != 30.0) fail(ErrorKind::invalid_argument, "--alpha must be 15 or 30");
  return {*opts.alpha};
}

fs::path alpha_dir(const fs::path& out, double alpha) { return out / ("alpha_" + alpha_label(alpha)); }

std::uint64_t file_digest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config:
      return 3;
    case ErrorKind::io:
      return 4;
    case ErrorKind::geometry_mismatch:
      return 5;
    case ErrorKind::missing_checkpoint:
      return 6;
    case ErrorKind::invalid_argument:
    case ErrorKind::out_of_range:
      return 7;
    case ErrorKind::state:
      return 8;
    case ErrorKind::lesion_placement:
      return 9;
  }
  return 1;
}

void write_loss_curve(const fs::path& path, const TrainResult& r) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  out << "# stage=" << stage_name(r.stage) << "\n";
  out << "# initial_loss=" << format_double(r.initial_loss) << "\n";
  out << "# final_loss=" << format_double(r.final_loss) << "\n";
  out << "step,loss\n";
  for (std::size_t i = 0; i < r.step_loss.size(); ++i) out << i << ',' << format_double(r.step_loss[i]) << '\n';
}

TrainResult read_loss_curve(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open " + path.string());
  TrainResult r;
  std::string line;
  auto value = [&](const std::string& prefix) {
    if (line.rfind(prefix, 0) != 0) fail(ErrorKind::io, path.string() + ": expected '" + prefix + "'");
    return line.substr(prefix.size());
  };
  try {
    std::getline(in, line);
    r.stage = parse_stage(value("# stage="));
    std::getline(in, line);
    r.initial_loss = std::stod(value("# initial_loss="));
    std::getline(in, line);
    r.final_loss = std::stod(value("# final_loss="));
    std::getline(in, line);
    value("step,loss");
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto parts = split(line, ',');
      if (parts.size() != 2) fail(ErrorKind::io, path.string() + ": malformed line '" + line + "'");
      r.step_loss.push_back(std::stod(parts[1]));
    }
  } catch (const std::invalid_argument&) {
    fail(ErrorKind::io, path.string() + ": malformed number");
  }
  return r;
}

namespace {

void write_manifest(const fs::path& dir, const RunConfig& cfg, const std::string& command,
                    std::optional<double> alpha) {
  fs::create_directories(dir);
  KeyValueFile kv = cfg.to_kv();
  kv.set("manifest", "tool", kToolVersion);
  kv.set("manifest", "command", command);
  if (alpha) {
    const auto g = cfg.geometry_for(*alpha);
    kv.set("manifest", "alpha_deg", format_double(*alpha));
    kv.set("manifest", "n_views", std::to_string(g.angles.n_views));
  }
  kv.save(dir / "manifest.txt");
}

int threads_of(const RunConfig& cfg) { return cfg.threads > 0 ? cfg.threads : default_threads(); }

std::vector<std::uint64_t> all_seeds(const RunConfig& cfg) {
  std::vector<std::uint64_t> s;
  for (std::size_t i = 0; i < cfg.n_train + cfg.n_test; ++i) s.push_back(cfg.base_seed + i);
  return s;
}

DatasetSplit load_split(const RunConfig& cfg, const fs::path& adir, double alpha) {
  const fs::path root = adir / "dataset";
  if (!fs::exists(root / "dataset.txt"))
    fail(ErrorKind::io, "no dataset in " + root.string() + " (run simulate first)");
  DatasetSplit split = read_dataset(root);
  if (!(split.geometry == cfg.geometry_for(alpha)))
    fail(ErrorKind::geometry_mismatch, root.string() + ": dataset geometry differs from the config (rerun simulate)");
  return split;
}

TripleNet make_net(const RunConfig& cfg, const DatasetSplit& split) {
  TripleNet net(cfg.networks, cfg.seed, split);
  net.weights = cfg.weights;
  return net;
}

TripleNet load_net(const RunConfig& cfg, const DatasetSplit& split, const fs::path& models) {
  TripleNet net = make_net(cfg, split);
  for (Stage s : {Stage::m2d, Stage::m3d, Stage::f}) load_stage(models, net, s);
  return net;
}

// Panels: input, suppressed, rib-free reference, suppressed − reference.
constexpr DisplayWindow kImageWindow{0.025, 0.05};
constexpr DisplayWindow kDifferenceWindow{0.0, 0.01};

void write_triptych(const fs::path& path, const Volume3& input, const Volume3& suppressed, const Volume3& truth) {
  const std::size_t y = input.shape()[1] / 2;
  write_png(path, hconcat({render_slice(input, SlicePlane::coronal, y, kImageWindow),
                           render_slice(suppressed, SlicePlane::coronal, y, kImageWindow),
                           render_slice(truth, SlicePlane::coronal, y, kImageWindow),
                           render_slice(subtract(suppressed, truth), SlicePlane::coronal, y, kDifferenceWindow)}));
}

void write_method(const RunConfig& cfg, const fs::path& dir, const std::string& method, const Case& c,
                  const Volume3& v) {
  write_volume(dir / (method + ".vol"), v);
  if (cfg.export_png) write_triptych(dir / (method + ".png"), c.vol_full, v, c.vol_ribfree);
}

std::string case_label(std::uint64_t seed) { return "case_" + std::to_string(seed); }

// Mean over cases per method, keeping kMethods order.
std::vector<MetricsReport> summarize(const std::vector<MetricsReport>& reports, const std::string& label) {
  std::vector<MetricsReport> out;
  for (const auto& m : kMethods) {
    MetricsReport s;
    s.case_id = label;
    s.method = m;
    std::size_t n = 0, np = 0;
    double psnr_sum = 0.0;
    bool any_inf = false;
    for (const auto& r : reports) {
      if (r.method != m) continue;
      s.l1 += r.l1;
      s.l2 += r.l2;
      s.l1_la += r.l1_la;
      s.l2_la += r.l2_la;
      ++n;
      if (r.psnr) {
        ++np;
        any_inf = any_inf || r.psnr->infinite;
        psnr_sum += r.psnr->db;
      }
    }
    if (n == 0) continue;
    s.l1 /= n;
    s.l2 /= n;
    s.l1_la /= n;
    s.l2_la /= n;
    if (np) {
      PsnrResult p;
      p.infinite = any_inf;
      p.db = any_inf ? INFINITY : psnr_sum / np;
      s.psnr = p;
    }
    out.push_back(s);
  }
  return out;
}

void write_metrics(const fs::path& dir, const std::vector<MetricsReport>& summary,
                   const std::vector<MetricsReport>& per_case) {
  {
    std::ofstream txt(dir / "metrics.txt", std::ios::binary);
    if (!txt) fail(ErrorKind::io, "cannot write " + (dir / "metrics.txt").string());
    txt << "# mean over test cases; L1/L2 against the rib-free reconstruction, LA = lung area\n";
    write_table(txt, summary);
    txt << "\n# per test case\n";
    write_table(txt, per_case);
  }
  std::ofstream csv(dir / "metrics.csv", std::ios::binary);
  if (!csv) fail(ErrorKind::io, "cannot write " + (dir / "metrics.csv").string());
  std::vector<MetricsReport> all = summary;
  all.insert(all.end(), per_case.begin(), per_case.end());
  write_csv(csv, all);
}

}  // namespace

void cmd_phantom(const RunConfig& cfg, const RunOptions& opts, std::ostream& log) {
  const fs::path root = opts.out / "phantoms";
  for (std::uint64_t seed : all_seeds(cfg)) {
    Phantom p = generate_phantom(seed, cfg.phantom);
    const fs::path dir = root / case_label(seed);
    fs::create_directories(dir);
    write_volume(dir / "full.vol", p.full);
    write_volume(dir / "ribfree.vol", p.rib_free);
    write_mask(dir / "lung_mask.msk", p.lung_mask);
    write_mask(dir / "lesion_mask.msk", p.lesion_mask);
    write_mask(dir / "rib_mask.msk", p.rib_mask);
    if (cfg.export_png) {
      const std::size_t y = p.full.shape()[1] / 2;
      write_png(dir / "preview.png", hconcat({render_slice(p.full, SlicePlane::coronal, y, kImageWindow),
                                              render_slice(p.rib_free, SlicePlane::coronal, y, kImageWindow)}));
    }
    log << "phantom " << seed << ": " << count(p.lesion_mask) << " lesion voxels\n";
  }
  write_manifest(root, cfg, "phantom", std::nullopt);
}

void cmd_simulate(const RunConfig& cfg, const RunOptions& opts, std::ostream& log) {
  for (double alpha : selected_alphas(cfg, opts)) {
    const fs::path adir = alpha_dir(opts.out, alpha);
    DatasetSplit split = build_dataset(cfg.n_train, cfg.n_test, cfg.base_seed, cfg.geometry_for(alpha), cfg.phantom,
                                       cfg.simulation, threads_of(cfg));
    write_dataset(adir / "dataset", split);
    write_manifest(adir / "dataset", cfg, "simulate", alpha);
    double worst = 0.0;
    for (const auto* set : {&split.train, &split.test})
      for (const auto& c : *set) worst = std::max(worst, c.linearity_max_abs / c.vol_range);
    log << "simulate alpha=" << alpha << ": " << split.train.size() << " train, " << split.test.size()
        << " test cases, worst linearity residual " << worst << " of range\n";
  }
}

void cmd_train(const RunConfig& cfg, const RunOptions& opts, Stage stage, std::ostream& log) {
  for (double alpha : selected_alphas(cfg, opts)) {
    const fs::path adir = alpha_dir(opts.out, alpha);
    const fs::path models = adir / "models";
    DatasetSplit split = load_split(cfg, adir, alpha);
    TripleNet net = make_net(cfg, split);

    KeyValueFile info;
    if (stage == Stage::f) {
      load_stage(models, net, Stage::m2d);
      load_stage(models, net, Stage::m3d);
      for (Stage s : {Stage::m2d, Stage::m3d})
        info.set("frozen", std::string(stage_name(s)) + "_before", std::to_string(file_digest(checkpoint_path(models, s))));
    }

    TrainConfig tc = cfg.train_config(stage);
    TrainResult r = train_stage(net, split, tc);
    save_stage(models, net, stage, tc.steps);
    write_loss_curve(models / ("loss_" + std::string(stage_name(stage)) + ".csv"), r);

    info.set("train", "stage", stage_name(stage));
    info.set("train", "steps", std::to_string(tc.steps));
    info.set("train", "initial_loss", format_double(r.initial_loss));
    info.set("train", "final_loss", format_double(r.final_loss));
    info.set("train", "checkpoint_digest", std::to_string(file_digest(checkpoint_path(models, stage))));
    if (stage == Stage::f) {
      bool unchanged = true;
      for (Stage s : {Stage::m2d, Stage::m3d}) {
        const std::string key = stage_name(s);
        std::string after = std::to_string(file_digest(checkpoint_path(models, s)));
        info.set("frozen", key + "_after", after);
        unchanged = unchanged && after == *info.get("frozen", key + "_before");
      }
      info.set("frozen", "unchanged", unchanged ? "true" : "false");
    }
    info.save(models / ("train_" + std::string(stage_name(stage)) + ".txt"));
    write_manifest(models, cfg, "train", alpha);
    log << "train " << stage_name(stage) << " alpha=" << alpha << ": loss " << r.initial_loss << " -> " << r.final_loss
        << " (ratio " << (r.initial_loss > 0 ? r.final_loss / r.initial_loss : 0.0) << ")\n";
  }
}

void cmd_suppress(const RunConfig& cfg, const RunOptions& opts, std::ostream& log) {
  for (double alpha : selected_alphas(cfg, opts)) {
    const fs::path adir = alpha_dir(opts.out, alpha);
    DatasetSplit split = load_split(cfg, adir, alpha);
    TripleNet net = load_net(cfg, split, adir / "models");
    for (const auto& c : split.test) {
      const fs::path dir = adir / "suppressed" / case_label(c.phantom_seed);
      fs::create_directories(dir);
      write_method(cfg, dir, "triple", c, suppress(net, c.proj_full, c.vol_full, threads_of(cfg)));
      log << "suppress alpha=" << alpha << " " << case_label(c.phantom_seed) << "\n";
    }
    write_manifest(adir / "suppressed", cfg, "suppress", alpha);
  }
}

void cmd_ablate(const RunConfig& cfg, const RunOptions& opts, std::ostream& log) {
  for (double alpha : selected_alphas(cfg, opts)) {
    const fs::path adir = alpha_dir(opts.out, alpha);
    DatasetSplit split = load_split(cfg, adir, alpha);
    TripleNet net = make_net(cfg, split);
    load_stage(adir / "models", net, Stage::m2d);
    load_stage(adir / "models", net, Stage::m3d);
    for (const auto& c : split.test) {
      const fs::path dir = adir / "suppressed" / case_label(c.phantom_seed);
      fs::create_directories(dir);
      write_method(cfg, dir, "none", c, c.vol_full);
      write_method(cfg, dir, "m2d", c, suppress_2d_only(net, c.proj_full, c.vol_full, threads_of(cfg)));
      write_method(cfg, dir, "m3d", c, suppress_3d_only(net, c.vol_full));
      log << "ablate alpha=" << alpha << " " << case_label(c.phantom_seed) << "\n";
    }
    write_manifest(adir / "suppressed", cfg, "ablate", alpha);
  }
}

void cmd_eval(const RunConfig& cfg, const RunOptions& opts, std::ostream& log) {
  std::vector<MetricsReport> all_summary, all_cases;
  for (double alpha : selected_alphas(cfg, opts)) {
    const fs::path adir = alpha_dir(opts.out, alpha);
    DatasetSplit split = load_split(cfg, adir, alpha);
    std::vector<MetricsReport> per_case;
    for (const auto& c : split.test) {
      const fs::path dir = adir / "suppressed" / case_label(c.phantom_seed);
      std::vector<MethodVolume> methods;
      for (const auto& m : kMethods) {
        const fs::path f = dir / (m + ".vol");
        if (!fs::exists(f)) fail(ErrorKind::io, "missing " + f.string() + " (run suppress and ablate first)");
        Volume3 v = read_volume(f);
        require_same_layout(v, c.vol_full, f.string().c_str());
        methods.push_back({m, std::move(v)});
      }
      auto reports = evaluate_methods(c, methods, "a" + alpha_label(alpha) + "/" + case_label(c.phantom_seed));
      per_case.insert(per_case.end(), reports.begin(), reports.end());
    }
    auto summary = summarize(per_case, "a" + alpha_label(alpha) + "/mean");
    write_metrics(adir, summary, per_case);
    all_summary.insert(all_summary.end(), summary.begin(), summary.end());
    all_cases.insert(all_cases.end(), per_case.begin(), per_case.end());
    log << "eval alpha=" << alpha << ":\n";
    write_table(log, summary);
  }
  fs::create_directories(opts.out);
  write_metrics(opts.out, all_summary, all_cases);
  write_manifest(opts.out, cfg, "eval", std::nullopt);
}

void cmd_demo(const RunConfig& cfg, const RunOptions& opts, std::ostream& log) {
  cmd_phantom(cfg, opts, log);
  cmd_simulate(cfg, opts, log);
  for (Stage s : {Stage::m2d, Stage::m3d, Stage::f}) cmd_train(cfg, opts, s, log);
  cmd_suppress(cfg, opts, log);
  cmd_ablate(cfg, opts, log);
  cmd_eval(cfg, opts, log);
  write_manifest(opts.out, cfg, "demo", std::nullopt);
}

}  // namespace dts

#include "commands.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "limi/checkpoint.hpp"
#include "limi/dataset_io.hpp"
#include "limi/error.hpp"
#include "limi/eval.hpp"
#include "limi/trainer.hpp"

namespace fs = std::filesystem;

namespace limi::cli {

namespace {

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out || !out.write(text.data(), static_cast<std::streamsize>(text.size()))) {
    throw IoError("cannot write " + path.string());
  }
}

template <typename Fn>
void write_with(const fs::path& path, Fn fn) {
  std::ostringstream s;
  fn(s);
  write_text(path, s.str());
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  return lines;
}

double parse_double(std::string_view s, const fs::path& where) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || p != s.data() + s.size()) {
    throw IoError(where.string() + ": bad number '" + std::string(s) + "'");
  }
  return v;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream s(line);
  for (std::string cell; std::getline(s, cell, ',');) out.push_back(cell);
  return out;
}

std::string dir_name(const std::string& id) {
  std::string s = id;
  for (char& ch : s)
    if (ch == '/') ch = '-';
  return s;
}

std::string variant_name(Objective o, BoundType b) {
  return std::string(to_string(o)) + "-" + std::string(to_string(b));
}

const ArmSpec& arm_by_id(const std::string& id) {
  static const std::vector<ArmSpec> arms = all_arms();
  for (const auto& a : arms)
    if (a.id() == id) return a;
  throw IoError("unknown arm '" + id + "'");
}

/// The config with the objective and bound of a pretraining variant.
ExperimentConfig with_variant(ExperimentConfig c, Objective o, BoundType b) {
  c.train.objective = o;
  c.train.bound = b;
  return c;
}

Dataset load_split(const ExperimentConfig& c, const GenerativeWorld& world,
                   const std::string& name) {
  const fs::path path = fs::path(c.out_dir) / "data" / (name + ".bin");
  if (!fs::exists(path)) {
    throw IoError("missing dataset " + path.string() + " (run gen-data with this config first)");
  }
  Dataset d = read_dataset_file(path);
  if (d.header.seed != c.seed || d.header.world_hash != world.hash() ||
      d.header.regions != c.world.n_regions || d.header.image_size != c.world.image_size) {
    throw ConfigError(path.string() + " was generated from a different config or seed");
  }
  return d;
}

void write_auc_csv(std::ostream& out, const std::vector<double>& auc) {
  out << "task,auc\n";
  double mean = 0.0;
  for (std::size_t t = 0; t < auc.size(); ++t) {
    out << "region" << t << ',' << format_double(auc[t]) << '\n';
    mean += auc[t] / static_cast<double>(auc.size());
  }
  out << "mean," << format_double(mean) << '\n';
}

void write_probe_log(std::ostream& out, const TrainLog& log) {
  out << "epoch,loss\n";
  for (const auto& s : log.steps) out << s.epoch << ',' << format_double(s.objective) << '\n';
}

std::string frozen_summary(const RunOutcome& o) {
  std::ostringstream s;
  s << "frozen_hash_before " << hex64(o.frozen_hash_before) << '\n'
    << "frozen_hash_after " << hex64(o.frozen_hash_after) << '\n'
    << "frozen_unchanged " << (o.frozen_hash_before == o.frozen_hash_after ? "yes" : "no")
    << '\n';
  return s.str();
}

}  // namespace

ExperimentConfig load(const fs::path& path, const Overrides& o) {
  ExperimentConfig c = load_config(path);
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.out_dir = *o.out;
  if (o.arm) c.arms = *o.arm;
  if (const char* env = std::getenv("LIMI_THREADS"); env && *env) {
    std::size_t cap = 0;
    const std::string_view s(env);
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), cap);
    if (ec != std::errc() || p != s.data() + s.size() || cap < 1) {
      throw ConfigError("LIMI_THREADS must be a positive integer, got '" + std::string(s) + "'");
    }
    c.threads = std::min(c.threads, cap);
  }
  c.sync();
  c.validate();
  return c;
}

// -- gen-data ------------------------------------------------------------------

int cmd_gen_data(const ExperimentConfig& c) {
  const GenerativeWorld world = matrix_world(c.world, c.seed);
  const Splits splits = make_splits(world, c.data, c.seed);
  const fs::path dir = fs::path(c.out_dir) / "data";
  ensure_dir(dir);
  fs::remove(dir / "DONE");

  const std::pair<const char*, const std::vector<WorldSample>*> parts[] = {
      {"pretrain", &splits.pretrain}, {"labeled", &splits.labeled}, {"test", &splits.test}};
  for (const auto& [name, samples] : parts) {
    DatasetHeader h;
    h.split = name;
    h.samples = samples->size();
    h.image_size = c.world.image_size;
    h.regions = c.world.n_regions;
    h.seed = c.seed;
    h.world_hash = world.hash();
    write_dataset_file(dir / (std::string(name) + ".bin"), h, *samples);
  }
  const auto oracle = world_oracle(world);
  write_with(dir / "oracle.csv", [&](std::ostream& s) { write_oracle_csv(s, oracle); });
  write_with(dir / "world.txt", [&](std::ostream& s) {
    s << "world_hash " << hex64(world.hash()) << "\nregion,cell,sentence_slot\n";
    for (std::size_t n = 0; n < c.world.n_regions; ++n) {
      s << n << ',' << world.region_cells[n] << ',' << world.region_to_sentence[n] << '\n';
    }
  });
  write_text(dir / "config.ini", serialize_config(c));
  write_text(dir / "DONE", "");

  std::cout << "gen-data: " << splits.pretrain.size() << " pretrain, " << splits.labeled.size()
            << " labeled, " << splits.test.size() << " test samples in " << dir.string() << '\n'
            << "world hash " << hex64(world.hash()) << '\n';
  write_oracle_csv(std::cout, oracle);
  return kOk;
}

// -- estimate-mi ---------------------------------------------------------------

int cmd_estimate_mi(const ExperimentConfig& c) {
  const GaussianTrainResult r = train_gaussian_critic(c.gaussian);
  const fs::path dir = fs::path(c.out_dir) / "estimate";
  ensure_dir(dir);
  write_with(dir / "steps.csv", [&](std::ostream& s) {
    s << "step,estimate\n";
    for (const auto& st : r.log.steps) s << st.step << ',' << format_double(st.estimate) << '\n';
  });
  std::ostringstream sum;
  sum << "bound " << to_string(c.gaussian.bound) << '\n'
      << "k_negatives " << c.gaussian.resolved_k() << '\n'
      << "steps " << c.gaussian.steps << '\n'
      << "analytic_mi " << format_double(r.analytic_mi) << '\n'
      << "final_smoothed " << format_double(r.final_smoothed) << '\n'
      << "max_smoothed " << format_double(r.max_smoothed) << '\n'
      << "error " << format_double(r.final_smoothed - r.analytic_mi) << '\n';
  if (c.gaussian.bound == BoundType::kCpc) {
    sum << "cap " << format_double(std::log(static_cast<double>(c.gaussian.resolved_k() + 1)))
        << '\n';
  }
  write_text(dir / "summary.txt", sum.str());
  write_text(dir / "DONE", "");
  std::cout << sum.str();
  return kOk;
}

// -- pretrain ------------------------------------------------------------------

int cmd_pretrain(const ExperimentConfig& base, const std::optional<std::string>& arm) {
  Objective objective = base.train.objective;
  BoundType bound = base.train.bound;
  if (arm) {
    std::set<std::pair<Objective, BoundType>> variants;
    for (const auto& a : filter_arms(all_arms(), *arm))
      if (a.objective) variants.insert({*a.objective, *a.bound});
    if (variants.size() != 1) {
      throw ConfigError("--arm '" + *arm + "' must select exactly one pretraining variant");
    }
    std::tie(objective, bound) = *variants.begin();
  }
  const ExperimentConfig c = with_variant(base, objective, bound);
  const GenerativeWorld world = matrix_world(c.world, c.seed);
  const Dataset data = load_split(c, world, "pretrain");
  const fs::path dir = fs::path(c.out_dir) / "pretrain" / variant_name(objective, bound);
  ensure_dir(dir);
  fs::remove(dir / "DONE");
  const std::uint64_t hash = pretrain_hash(c);

  CheckpointFn save = [&](std::size_t epoch, const Model& model) {
    const std::string name = "epoch" + std::to_string(epoch) + ".ckpt";
    save_checkpoint(dir / name, model_checkpoint(model, hash, c.seed));
    return name;
  };
  std::cerr << "pretrain " << variant_name(objective, bound) << " on " << data.samples.size()
            << " samples\n";
  PretrainResult r;
  try {
    r = pretrain(data.samples, c.model, c.train, save);
  } catch (const TrainingAborted& e) {
    std::cerr << "pretrain aborted; last good checkpoint: " << e.last_checkpoint() << '\n';
    throw;
  }
  save_checkpoint(dir / "model.ckpt", model_checkpoint(r.model, hash, c.seed));
  write_with(dir / "steps.csv", [&](std::ostream& s) { r.log.write_steps_csv(s); });
  write_with(dir / "epochs.csv", [&](std::ostream& s) { r.log.write_epochs_csv(s); });
  write_text(dir / "DONE", "");

  std::vector<double> est;
  for (const auto& s : r.log.steps) est.push_back(s.estimate);
  const auto sm = smoothed(est, 100);
  std::cout << "pretrain " << variant_name(objective, bound) << ": " << r.log.steps.size()
            << " steps, smoothed estimate " << format_double(sm.front()) << " -> "
            << format_double(sm.back()) << " nats\n"
            << "checkpoint " << (dir / "model.ckpt").string() << '\n';
  return kOk;
}

// -- probe ---------------------------------------------------------------------

int cmd_probe(const ExperimentConfig& c, const std::optional<std::string>& arm_filter,
              const std::optional<fs::path>& checkpoint) {
  ArmSpec arm{c.train.objective == Objective::kLocal ? "local-mi" : "global-mi",
              c.train.objective, c.train.bound, c.probe.mode};
  if (arm_filter) {
    const auto matches = filter_arms(all_arms(), *arm_filter);
    if (matches.size() != 1) {
      std::string ids;
      for (const auto& a : matches) ids += " " + a.id();
      throw ConfigError("--arm '" + *arm_filter + "' must select exactly one arm; matches:" +
                        (ids.empty() ? " none" : ids));
    }
    arm = matches.front();
  }
  const GenerativeWorld world = matrix_world(c.world, c.seed);
  const Dataset labeled = load_split(c, world, "labeled");
  const Dataset test = load_split(c, world, "test");

  ProbeConfig pc = c.probe;
  pc.mode = arm.mode;
  pc.seed = c.seed;
  ParamVector image;
  if (arm.objective) {
    const ExperimentConfig vc = with_variant(c, *arm.objective, *arm.bound);
    const fs::path path = checkpoint.value_or(fs::path(c.out_dir) / "pretrain" /
                                              variant_name(*arm.objective, *arm.bound) /
                                              "model.ckpt");
    const Checkpoint ckpt = load_checkpoint(path);
    if (ckpt.config_hash != pretrain_hash(vc)) {
      throw ConfigError(path.string() + " was pretrained with a different config");
    }
    image = ckpt.group("image");
    if (!image.same_layout(make_image_encoder_params(c.model.image))) {
      throw ConfigError(path.string() + ": image encoder layout differs from the config");
    }
  } else {
    Rng init(c.seed, "init");
    image = make_image_encoder_params(c.model.image);
    init_image_encoder(image, c.model.image, init);
    pc.epochs *= pc.baseline_epoch_factor;
  }

  const std::size_t tasks = c.world.n_regions;
  ProbeResult r = train_probe(c.model.image, std::move(image), labeled.samples, tasks, pc);
  RunOutcome o;
  o.arm = arm;
  o.seed = c.seed;
  o.task_auc = probe_auc(probe_logits(c.model.image, r.image, r.head, test.samples), test.samples);
  o.frozen_hash_before = r.frozen_hash_before;
  o.frozen_hash_after = r.frozen_hash_after;

  const fs::path dir = fs::path(c.out_dir) / "probe" / dir_name(arm.id());
  ensure_dir(dir);
  fs::remove(dir / "DONE");
  Checkpoint head;
  head.config_hash = config_hash(c);
  head.seed = c.seed;
  head.set("image", r.image);
  head.set("head", r.head);
  save_checkpoint(dir / "probe.ckpt", head);
  write_with(dir / "log.csv", [&](std::ostream& s) { write_probe_log(s, r.log); });
  write_with(dir / "auc.csv", [&](std::ostream& s) { write_auc_csv(s, o.task_auc); });
  std::ostringstream sum;
  sum << "arm " << arm.id() << '\n' << frozen_summary(o);
  write_auc_csv(sum, o.task_auc);
  write_text(dir / "summary.txt", sum.str());
  write_text(dir / "DONE", "");
  std::cout << sum.str();
  return kOk;
}

// -- matrix --------------------------------------------------------------------

int cmd_matrix(const ExperimentConfig& c) {
  const MatrixConfig mc = matrix_config(c);
  const fs::path dir = fs::path(c.out_dir) / "matrix";
  const fs::path runs = dir / "runs";
  ensure_dir(dir);
  std::error_code ec;
  fs::remove_all(runs, ec);
  if (ec) throw IoError("cannot clear " + runs.string() + ": " + ec.message());
  for (const char* f : {"results.csv", "results.txt", "DONE"}) fs::remove(dir / f);
  ensure_dir(runs);

  std::ostringstream manifest;
  manifest << "limi-matrix 1\nconfig_hash " << hex64(config_hash(c)) << "\ntasks "
           << c.world.n_regions << '\n';
  for (const auto& a : mc.arms)
    for (auto s : mc.seeds) manifest << "run " << a.id() << ' ' << s << '\n';
  write_text(dir / "manifest.txt", manifest.str());
  write_text(dir / "config.ini", serialize_config(c));

  MatrixHooks hooks;
  hooks.on_message = [](const std::string& m) { std::cerr << m << '\n'; };
  hooks.on_run = [&](const RunOutcome& o) {
    const fs::path rd = runs / dir_name(o.arm.id()) / ("seed" + std::to_string(o.seed));
    ensure_dir(rd);
    if (!o.ok) {
      write_text(rd / "error.txt", o.error + '\n');
      std::cerr << "run " << o.arm.id() << " seed " << o.seed << " failed: " << o.error << '\n';
      return;
    }
    write_with(rd / "auc.csv", [&](std::ostream& s) { write_auc_csv(s, o.task_auc); });
    write_with(rd / "probe_log.csv", [&](std::ostream& s) { write_probe_log(s, o.probe_log); });
    if (!o.pretrain_log.steps.empty()) {
      write_with(rd / "pretrain_steps.csv",
                 [&](std::ostream& s) { o.pretrain_log.write_steps_csv(s); });
    }
    write_text(rd / "frozen.txt", frozen_summary(o));
    write_text(rd / "DONE", "");
  };
  const MatrixResult r = run_experiment_matrix(mc, hooks);
  write_with(dir / "results.csv", [&](std::ostream& s) { write_results_csv(s, r.table); });
  write_with(dir / "results.txt", [&](std::ostream& s) { write_results_text(s, r.table); });
  write_results_text(std::cout, r.table);

  std::size_t failed = 0;
  for (const auto& o : r.runs) failed += o.ok ? 0 : 1;
  if (failed) {
    std::cerr << "matrix: " << failed << " of " << r.runs.size() << " runs failed\n";
    return kIncomplete;
  }
  write_text(dir / "DONE", "");
  return kOk;
}

// -- report --------------------------------------------------------------------

namespace {

/// Index-wise mean of several series (shorter series drop out).
struct Curve {
  std::vector<double> sum;
  std::vector<std::size_t> count;

  void add(const std::vector<double>& v) {
    if (v.size() > sum.size()) {
      sum.resize(v.size(), 0.0);
      count.resize(v.size(), 0);
    }
    for (std::size_t i = 0; i < v.size(); ++i) {
      sum[i] += v[i];
      ++count[i];
    }
  }
};

/// Column `col` of a CSV with a header row.
std::vector<double> csv_column(const fs::path& path, std::size_t col) {
  std::vector<double> out;
  const auto lines = read_lines(path);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto cells = split_csv(lines[i]);
    if (cells.size() <= col) throw IoError(path.string() + ": short row");
    out.push_back(parse_double(cells[col], path));
  }
  return out;
}

void write_curve(const fs::path& path, const std::string& index_name, std::size_t first,
                 const Curve& c) {
  write_with(path, [&](std::ostream& s) {
    s << index_name << ",mean,n_seeds\n";
    for (std::size_t i = 0; i < c.sum.size(); ++i) {
      s << i + first << ',' << format_double(c.sum[i] / static_cast<double>(c.count[i])) << ','
        << c.count[i] << '\n';
    }
  });
}

}  // namespace

int cmd_report(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.txt";
  if (!fs::exists(manifest_path)) {
    std::cerr << "report: " << dir.string()
              << ": 0 completed runs (no manifest.txt; run the matrix first)\n";
    return kIncomplete;
  }
  const auto lines = read_lines(manifest_path);
  if (lines.empty() || lines.front() != "limi-matrix 1") {
    throw IoError(manifest_path.string() + ": not a matrix manifest");
  }
  std::size_t tasks = 0;
  std::vector<std::pair<std::string, std::uint64_t>> expected;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    std::istringstream s(lines[i]);
    std::string kind;
    s >> kind;
    if (kind == "tasks") {
      s >> tasks;
    } else if (kind == "run") {
      std::string id;
      std::uint64_t seed = 0;
      if (!(s >> id >> seed)) throw IoError(manifest_path.string() + ": bad run line");
      expected.emplace_back(id, seed);
    } else if (kind != "config_hash") {
      throw IoError(manifest_path.string() + ": unexpected line '" + lines[i] + "'");
    }
  }
  if (tasks == 0) throw IoError(manifest_path.string() + ": missing task count");

  std::vector<ArmSpec> arms;
  std::vector<RunOutcome> outcomes;
  std::vector<std::string> missing;
  std::map<std::string, std::pair<Curve, Curve>> curves;  // pretrain, probe
  for (const auto& [id, seed] : expected) {
    const ArmSpec& arm = arm_by_id(id);
    if (std::none_of(arms.begin(), arms.end(), [&](const ArmSpec& a) { return a.id() == id; })) {
      arms.push_back(arm);
    }
    const fs::path rd = dir / "runs" / dir_name(id) / ("seed" + std::to_string(seed));
    if (!fs::exists(rd / "DONE") || !fs::exists(rd / "auc.csv")) {
      missing.push_back(id + " seed " + std::to_string(seed) +
                        (fs::exists(rd / "error.txt") ? " (failed)" : " (not completed)"));
      continue;
    }
    RunOutcome o;
    o.arm = arm;
    o.seed = seed;
    o.ok = true;
    o.task_auc = csv_column(rd / "auc.csv", 1);
    if (o.task_auc.size() != tasks + 1) throw IoError((rd / "auc.csv").string() + ": wrong row count");
    o.task_auc.pop_back();  // stored mean
    outcomes.push_back(std::move(o));
    auto& [pre, probe] = curves[id];
    if (fs::exists(rd / "pretrain_steps.csv")) pre.add(csv_column(rd / "pretrain_steps.csv", 3));
    probe.add(csv_column(rd / "probe_log.csv", 1));
  }

  const auto table = results_table(outcomes, arms, tasks);
  std::ostringstream rep;
  rep << "completed " << outcomes.size() << " of " << expected.size() << " runs\n\n";
  write_results_text(rep, table);
  if (!missing.empty()) {
    rep << "\nmissing runs:\n";
    for (const auto& m : missing) rep << "  " << m << '\n';
  }
  write_text(dir / "report.txt", rep.str());
  write_with(dir / "report.csv", [&](std::ostream& s) { write_results_csv(s, table); });
  const fs::path cdir = dir / "curves";
  ensure_dir(cdir);
  for (const auto& [id, pair] : curves) {
    const auto& [pre, probe] = pair;
    if (!pre.sum.empty()) write_curve(cdir / (dir_name(id) + "-pretrain.csv"), "step", 0, pre);
    write_curve(cdir / (dir_name(id) + "-probe.csv"), "epoch", 1, probe);
  }
  std::cout << rep.str();
  if (!missing.empty() || outcomes.empty()) {
    std::cerr << "report: " << missing.size() << " of " << expected.size()
              << " runs incomplete\n";
    return kIncomplete;
  }
  return kOk;
}

}  // namespace limi::cli

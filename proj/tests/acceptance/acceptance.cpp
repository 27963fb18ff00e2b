// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "limi/checkpoint.hpp"
#include "limi/config.hpp"
#include "limi/critic.hpp"
#include "limi/encoders.hpp"
#include "limi/estimators.hpp"
#include "limi/eval.hpp"
#include "limi/local_mi.hpp"
#include "limi/synthetic_world.hpp"
#include "limi/trainer.hpp"

namespace fs = std::filesystem;
using namespace limi;

namespace {

// -- pinned tolerances ---------------------------------------------------------

constexpr double kGaussianBand = 0.15;        // |final - truth|, nats
constexpr double kGaussianOvershoot = 0.05;   // max smoothed - truth, nats
constexpr double kCpcFloor = 0.6;             // final normalized estimate, nats
constexpr std::size_t kCpcK = 63;
constexpr double kExactBoundSlack = 1e-12;
constexpr double kLogRatioEquality = 1e-9;
constexpr double kChainResidual = 1e-12;
constexpr double kChainSlackFloor = -1e-12;
constexpr double kDegenerate = 1e-12;
constexpr double kGradRel = 1e-4;
constexpr double kFdStep = 1e-5;
constexpr double kLocalMargin = 0.02;         // tuned-local minus image-only, AUC
constexpr double kGaussianSeconds = 120.0;
constexpr double kMatrixSeconds = 1800.0;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(precision);
  s << v;
  return s.str();
}

std::string sci(double v) {
  std::ostringstream s;
  s.setf(std::ios::scientific);
  s.precision(2);
  s << v;
  return s.str();
}

// -- independent oracles ---------------------------------------------------------

/// Mutual information of a joint table by direct summation over cells.
double table_mi(const Matrix& joint) {
  std::vector<double> pa(joint.rows, 0.0), pb(joint.cols, 0.0);
  for (std::size_t a = 0; a < joint.rows; ++a)
    for (std::size_t b = 0; b < joint.cols; ++b) {
      pa[a] += joint(a, b);
      pb[b] += joint(a, b);
    }
  double mi = 0.0;
  for (std::size_t a = 0; a < joint.rows; ++a)
    for (std::size_t b = 0; b < joint.cols; ++b)
      if (joint(a, b) > 0.0) mi += joint(a, b) * std::log(joint(a, b) / (pa[a] * pb[b]));
  return mi;
}

/// Pair-counting AUC with ties worth one half.
double pair_count_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  std::uint64_t twice_u = 0, pos = 0, neg = 0;
  for (int l : labels) (l ? pos : neg) += 1;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      twice_u += scores[i] > scores[j] ? 2 : scores[i] == scores[j] ? 1 : 0;
    }
  }
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(pos * neg));
}

template <typename F>
double central_difference(F&& f, std::vector<double> x, std::size_t i) {
  const double x0 = x[i];
  x[i] = x0 + kFdStep;
  const double up = f(x);
  x[i] = x0 - kFdStep;
  const double down = f(x);
  return (up - down) / (2.0 * kFdStep);
}

double rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
}

// -- criteria 1 and 2 ------------------------------------------------------------

Outcome gaussian_mine(const ExperimentConfig& base) {
  const auto t0 = Clock::now();
  Outcome o{true, ""};
  for (double rho : {0.5, 0.9}) {
    GaussianTrainConfig g = base.gaussian;
    g.pairs.rho = {rho};
    g.pairs.dim = 1;
    g.bound = BoundType::kMineDv;
    const auto r = train_gaussian_critic(g);
    const double truth = -0.5 * std::log(1.0 - rho * rho);
    const bool ok = std::abs(r.final_smoothed - truth) <= kGaussianBand &&
                    r.max_smoothed <= truth + kGaussianOvershoot;
    o.pass = o.pass && ok;
    o.detail += "rho=" + fmt(rho, 1) + " truth=" + fmt(truth) + " final=" + fmt(r.final_smoothed) +
                " max=" + fmt(r.max_smoothed) + "; ";
  }
  const double secs = seconds_since(t0);
  o.pass = o.pass && secs < kGaussianSeconds;
  o.detail += "band " + fmt(kGaussianBand, 2) + ", overshoot " + fmt(kGaussianOvershoot, 2) +
              ", " + fmt(secs, 1) + "s";
  return o;
}

Outcome infonce_cap(const ExperimentConfig& base) {
  const auto t0 = Clock::now();
  GaussianTrainConfig g = base.gaussian;
  g.pairs.rho = {0.9};
  g.pairs.dim = 1;
  g.bound = BoundType::kCpc;
  g.k_negatives = kCpcK;
  g.batch_size = std::max(g.batch_size, kCpcK + 1);
  const auto r = train_gaussian_critic(g);
  const double cap = std::log(static_cast<double>(kCpcK + 1));
  std::size_t over = 0;
  for (const auto& s : r.log.steps) over += s.estimate > cap ? 1 : 0;
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = over == 0 && r.final_smoothed >= kCpcFloor && secs < kGaussianSeconds;
  o.detail = "K=" + std::to_string(kCpcK) + " cap=" + fmt(cap) + " steps above cap " +
             std::to_string(over) + "/" + std::to_string(r.log.steps.size()) +
             ", final=" + fmt(r.final_smoothed) + " (floor " + fmt(kCpcFloor, 2) + "), " +
             fmt(secs, 1) + "s";
  return o;
}

// -- criterion 3 -----------------------------------------------------------------

Outcome exact_bound() {
  Rng rng(2024);
  std::vector<GenerativeWorld> worlds;
  for (int w = 0; w < 10; ++w) {
    WorldConfig c;
    c.signal_strength = rng.uniform(0.05, 0.95);
    worlds.push_back(sample_world(c, rng));
  }
  double worst_gap = -1e300, worst_eq = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto& w = worlds[i % worlds.size()];
    const std::size_t region = rng.index(w.config.n_regions);
    const Matrix joint = i % 3 == 0   ? patch_hidden_joint(w, region)
                         : i % 3 == 1 ? sentence_hidden_joint(w, region)
                                      : patch_sentence_joint(w, region);
    const double mi = table_mi(joint);
    Matrix critic(joint.rows, joint.cols);
    const double scale = rng.uniform(0.1, 5.0);
    for (auto& f : critic.data) f = scale * rng.normal();
    worst_gap = std::max(worst_gap, dv_bound_exact(joint, critic) - mi);

    std::vector<double> pa(joint.rows, 0.0), pb(joint.cols, 0.0);
    for (std::size_t a = 0; a < joint.rows; ++a)
      for (std::size_t b = 0; b < joint.cols; ++b) {
        pa[a] += joint(a, b);
        pb[b] += joint(a, b);
      }
    Matrix ratio(joint.rows, joint.cols);
    for (std::size_t a = 0; a < joint.rows; ++a)
      for (std::size_t b = 0; b < joint.cols; ++b)
        ratio(a, b) = std::log(joint(a, b) / (pa[a] * pb[b]));
    worst_eq = std::max(worst_eq, std::abs(dv_bound_exact(joint, ratio) - mi));
  }
  Outcome o;
  o.pass = worst_gap <= kExactBoundSlack && worst_eq <= kLogRatioEquality;
  o.detail = "100 critics, max(DV - MI)=" + sci(worst_gap) + ", log-ratio |DV - MI|=" +
             sci(worst_eq) + " (tol " + sci(kLogRatioEquality) + ")";
  return o;
}

// -- criterion 4 -----------------------------------------------------------------

Outcome chain_rule() {
  Rng rng(77);
  double worst_residual = 0.0, min_slack = 1e300;
  std::size_t checks = 0;
  for (int w = 0; w < 20; ++w) {
    WorldConfig c;
    c.n_regions = 2 + rng.index(3);
    c.hidden_cardinality = 2 + rng.index(2);
    c.image_noise_levels = 1 + rng.index(3);
    c.signal_strength = rng.uniform();
    const auto world = sample_world(c, rng);
    for (const auto& r : chain_rule_check(world)) {
      worst_residual = std::max(worst_residual, r.residual);
      min_slack = std::min(min_slack, r.slack);
      ++checks;
    }
  }
  Outcome o;
  o.pass = worst_residual < kChainResidual && min_slack >= kChainSlackFloor;
  o.detail = "20 worlds, " + std::to_string(checks) + " regions, max residual " +
             sci(worst_residual) + ", min slack " + sci(min_slack);
  return o;
}

// -- criterion 5 -----------------------------------------------------------------

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (auto& x : m.data) x = rng.normal();
  return m;
}

struct CriticParams {
  MlpSpec spec;
  ParamVector params;
};

CriticParams random_critic(std::size_t image_dim, std::size_t text_dim, Rng& rng) {
  CriticParams c{critic_spec(image_dim, text_dim, std::vector<std::size_t>{8, 4}), {}};
  c.params = make_critic_params(c.spec);
  init_critic(c.params, c.spec, rng);
  for (const auto& s : c.params.segments())
    if (s.name.starts_with("b"))
      for (auto& v : c.params.segment(s.name)) v = 0.1 * rng.normal();
  return c;
}

Outcome degenerate() {
  Rng rng(5);
  double worst = 0.0;
  for (int t = 0; t < 10; ++t) {
    const std::size_t batch = 2 + rng.index(15), di = 2 + rng.index(6), dt = 2 + rng.index(6);
    const auto critic = random_critic(di, dt, rng);
    const Matrix image = random_matrix(batch, di, rng), text = random_matrix(batch, dt, rng);
    std::vector<Matrix> grids, sentences;
    for (std::size_t j = 0; j < batch; ++j) {
      Matrix g(1, di), s(1, dt);
      std::copy(image.row(j).begin(), image.row(j).end(), g.data.begin());
      std::copy(text.row(j).begin(), text.row(j).end(), s.data.begin());
      grids.push_back(g);
      sentences.push_back(s);
    }
    ObjectiveOptions o;
    o.bound = t % 2 ? BoundType::kCpc : BoundType::kMineDv;
    o.k_negatives = 1 + rng.index(batch - 1);
    Rng a(100 + t), b(100 + t);
    const auto local = local_feature_objective(grids, sentences, critic.spec, critic.params, o, a);
    const auto global = pair_feature_objective(image, text, critic.spec, critic.params, o, b);
    worst = std::max(worst, std::abs(local.objective - global.objective));
    worst = std::max(worst, max_abs_diff(local.critic_grad.values(), global.critic_grad.values()));
    for (std::size_t j = 0; j < batch; ++j) {
      worst = std::max(worst, max_abs_diff(local.d_grids[j].data, global.d_image.row(j)));
      worst = std::max(worst, max_abs_diff(local.d_sentences[j].data, global.d_text.row(j)));
    }
  }
  Outcome o;
  o.pass = worst <= kDegenerate;
  o.detail = "10 batches, max |local - global| over objective and gradients " + sci(worst);
  return o;
}

// -- criterion 6 -----------------------------------------------------------------

double bound_value(BoundType b, const ScoreBatch& s) {
  return b == BoundType::kMineDv ? dv_bound(s).value_nats
                                 : infonce_bound(s.joint, s.negative, false).value_nats;
}

double score_gradient_error(BoundType bound, Rng& rng) {
  ScoreBatch s;
  const std::size_t batch = 1 + rng.index(8), k = 1 + rng.index(8);
  s.joint.resize(batch);
  for (auto& x : s.joint) x = 2.0 * rng.normal();
  s.negative = random_matrix(batch, k, rng);
  const auto g = bound_gradient(bound, s);
  double worst = 0.0;
  for (std::size_t i = 0; i < batch; ++i) {
    auto f = [&](const std::vector<double>& x) {
      ScoreBatch t = s;
      t.joint = x;
      return bound_value(bound, t);
    };
    worst = std::max(worst, rel_error(g.d_joint[i], central_difference(f, s.joint, i)));
  }
  for (std::size_t i = 0; i < s.negative.data.size(); ++i) {
    auto f = [&](const std::vector<double>& x) {
      ScoreBatch t = s;
      t.negative.data = x;
      return bound_value(bound, t);
    };
    worst = std::max(worst, rel_error(g.d_negative.data[i],
                                      central_difference(f, s.negative.data, i)));
  }
  return worst;
}

double local_gradient_error(BoundType bound, Rng& rng) {
  const std::size_t batch = 2 + rng.index(4), cells = 4, di = 3, dt = 3;
  auto critic = random_critic(di, dt, rng);
  std::vector<Matrix> grids, sentences;
  for (std::size_t j = 0; j < batch; ++j) {
    grids.push_back(random_matrix(cells, di, rng));
    sentences.push_back(random_matrix(1 + rng.index(3), dt, rng));
  }
  ObjectiveOptions o;
  o.bound = bound;
  o.k_negatives = 1 + rng.index(batch - 1);
  const std::uint64_t neg_seed = rng.engine()();
  auto eval = [&](const ParamVector& c, const std::vector<Matrix>& g,
                  const std::vector<Matrix>& s) {
    Rng neg(neg_seed);
    return local_feature_objective(g, s, critic.spec, c, o, neg);
  };
  const auto r = eval(critic.params, grids, sentences);
  double worst = 0.0;
  const std::vector<double> cx(critic.params.values().begin(), critic.params.values().end());
  for (std::size_t i = 0; i < cx.size(); ++i) {
    auto f = [&](const std::vector<double>& v) {
      ParamVector c = critic.params;
      std::copy(v.begin(), v.end(), c.values().begin());
      return eval(c, grids, sentences).objective;
    };
    worst = std::max(worst, rel_error(r.critic_grad.values()[i], central_difference(f, cx, i)));
  }
  for (std::size_t j = 0; j < batch; ++j) {
    for (std::size_t i = 0; i < grids[j].data.size(); ++i) {
      auto f = [&](const std::vector<double>& v) {
        auto g = grids;
        g[j].data = v;
        return eval(critic.params, g, sentences).objective;
      };
      worst = std::max(worst,
                       rel_error(r.d_grids[j].data[i], central_difference(f, grids[j].data, i)));
    }
    for (std::size_t i = 0; i < sentences[j].data.size(); ++i) {
      auto f = [&](const std::vector<double>& v) {
        auto s = sentences;
        s[j].data = v;
        return eval(critic.params, grids, s).objective;
      };
      worst = std::max(worst, rel_error(r.d_sentences[j].data[i],
                                        central_difference(f, sentences[j].data, i)));
    }
  }
  return worst;
}

/// Through both encoders: sampled coordinates of every parameter group.
double model_gradient_error(Objective objective, BoundType bound, Rng& rng) {
  ModelConfig cfg;
  cfg.image.image_size = 8;
  cfg.image.local_channels = {2, 3};
  cfg.image.global_channels = 4;
  cfg.image.global_dim = 3;
  cfg.text.vocab_size = 6;
  cfg.text.embed_dim = 3;
  cfg.text.hidden = 4;
  cfg.text.text_dim = 3;
  cfg.local_critic_hidden = {5};
  cfg.global_critic_hidden = {5};
  std::vector<ImageSample> images;
  std::vector<ReportSample> reports;
  const std::size_t batch = 3;
  for (std::size_t j = 0; j < batch; ++j) {
    ImageSample im{8, 8, std::vector<double>(64)};
    for (auto& p : im.pixels) p = rng.uniform();
    images.push_back(im);
    ReportSample r;
    for (std::size_t m = 0; m < 1 + rng.index(2); ++m)
      r.sentences.push_back({static_cast<std::uint32_t>(rng.index(6)),
                             static_cast<std::uint32_t>(rng.index(6))});
    reports.push_back(r);
  }
  std::vector<PairRef> refs;
  for (std::size_t j = 0; j < batch; ++j) refs.push_back({&images[j], &reports[j]});
  Model model = init_model(cfg, objective, rng);
  for (ParamVector* p : {&model.image, &model.text, &model.critic})
    for (const auto& s : p->segments())
      if (s.name.find(".b") != std::string::npos || s.name.starts_with("b"))
        for (auto& v : p->segment(s.name)) v = 0.1 * rng.normal();
  ObjectiveOptions o;
  o.bound = bound;
  o.k_negatives = 2;
  const std::uint64_t neg_seed = rng.engine()();
  auto eval = [&](const Model& m) {
    Rng neg(neg_seed);
    return model_objective(objective, refs, cfg, m, o, neg);
  };
  const auto r = eval(model);
  double worst = 0.0;
  for (ParamVector Model::*group : {&Model::image, &Model::text, &Model::critic}) {
    const ParamVector& grad = r.grad.*group;
    const std::vector<double> x((model.*group).values().begin(), (model.*group).values().end());
    for (std::size_t i = 0; i < x.size(); i += 1 + x.size() / 25) {
      auto f = [&](const std::vector<double>& v) {
        Model m = model;
        std::copy(v.begin(), v.end(), (m.*group).values().begin());
        return eval(m).objective;
      };
      worst = std::max(worst, rel_error(grad.values()[i], central_difference(f, x, i)));
    }
  }
  return worst;
}

Outcome gradient_suite() {
  Rng rng(606);
  double dv = 0.0, cpc = 0.0, local = 0.0, model = 0.0;
  for (int t = 0; t < 50; ++t) {
    dv = std::max(dv, score_gradient_error(BoundType::kMineDv, rng));
    cpc = std::max(cpc, score_gradient_error(BoundType::kCpc, rng));
    local = std::max(local, local_gradient_error(t % 2 ? BoundType::kCpc : BoundType::kMineDv,
                                                 rng));
    model = std::max(model, model_gradient_error(t % 4 < 2 ? Objective::kLocal : Objective::kGlobal,
                                                 t % 2 ? BoundType::kCpc : BoundType::kMineDv,
                                                 rng));
  }
  Outcome o;
  o.pass = std::max({dv, cpc, local, model}) < kGradRel;
  o.detail = "50 instances, max rel error dv " + sci(dv) + ", cpc " + sci(cpc) + ", local " +
             sci(local) + ", encoders+critic " + sci(model) + " (tol " + sci(kGradRel) + ")";
  return o;
}

// -- criterion 9 -----------------------------------------------------------------

Outcome auc_oracle() {
  Rng rng(9);
  std::size_t mismatches = 0, largest = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n =
        t < 20 ? 10000
               : 2 + static_cast<std::size_t>(std::exp(rng.uniform(0.0, std::log(9998.0))));
    largest = std::max(largest, n);
    const int tie_levels = t % 3 == 0 ? 3 : t % 3 == 1 ? 50 : 0;
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      labels[i] = static_cast<int>(rng.index(2));
      scores[i] = tie_levels ? static_cast<double>(rng.index(tie_levels)) : rng.normal();
    }
    labels[0] = 0;
    labels[1] = 1;
    if (auc(scores, labels) != pair_count_auc(scores, labels)) ++mismatches;
  }
  Outcome o;
  o.pass = mismatches == 0;
  o.detail = "1000 instances up to " + std::to_string(largest) + " elements, " +
             std::to_string(mismatches) + " mismatches (exact equality)";
  return o;
}

// -- CLI-driven criteria -----------------------------------------------------------

struct Cli {
  fs::path exe;
  fs::path log_dir;

  int run(const std::string& name, const std::string& args) const {
    const fs::path log = log_dir / (name + ".log");
    const std::string cmd = "'" + exe.string() + "' " + args + " > '" + log.string() + "' 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
};

const std::vector<std::string> kVariants{"local-mi/mine_dv", "local-mi/cpc", "global-mi/mine_dv",
                                         "global-mi/cpc"};

/// Every subcommand once, writing under `out`. Returns the failing step or "".
std::string smoke_sequence(const Cli& cli, const fs::path& config, const fs::path& out,
                           const std::string& tag) {
  const std::string common = "--config '" + config.string() + "' --out '" + out.string() + "'";
  if (cli.run(tag + "-gen-data", "gen-data " + common)) return "gen-data";
  if (cli.run(tag + "-estimate-mi", "estimate-mi " + common)) return "estimate-mi";
  for (const auto& v : kVariants) {
    const std::string name = v.substr(0, v.find('/')) + "-" + v.substr(v.find('/') + 1);
    if (cli.run(tag + "-pretrain-" + name, "pretrain " + common + " --arm " + v))
      return "pretrain " + v;
    for (const char* mode : {"frozen", "finetune"})
      if (cli.run(tag + "-probe-" + name + "-" + mode,
                  "probe " + common + " --arm " + v + "/" + mode))
        return "probe " + v + "/" + mode;
  }
  if (cli.run(tag + "-probe-image-only", "probe " + common + " --arm image-only"))
    return "probe image-only";
  if (cli.run(tag + "-matrix", "matrix " + common)) return "matrix";
  if (cli.run(tag + "-report", "report '" + (out / "matrix").string() + "'")) return "report";
  return "";
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = read_file(e.path());
  return files;
}

Outcome determinism(const Cli& cli, const fs::path& smoke, const fs::path& work) {
  // Both runs write to the same path; the first is moved aside afterwards.
  const fs::path run = work / "rerun", a = work / "run-a", b = run;
  fs::remove_all(a);
  fs::remove_all(run);
  for (const char* tag : {"a", "b"}) {
    const std::string failed = smoke_sequence(cli, smoke, run, tag);
    if (!failed.empty())
      return {false, "subcommand '" + failed + "' failed (see " + cli.log_dir.string() + ")"};
    if (std::string(tag) == "a") fs::rename(run, a);
  }
  const auto ta = tree(a), tb = tree(b);
  std::size_t differ = 0;
  std::string first;
  for (const auto& [name, bytes] : ta) {
    const auto it = tb.find(name);
    if (it == tb.end() || it->second != bytes) {
      if (first.empty()) first = name;
      ++differ;
    }
  }
  for (const auto& [name, bytes] : tb)
    if (!ta.count(name)) {
      if (first.empty()) first = name;
      ++differ;
    }
  Outcome o;
  o.pass = differ == 0 && !ta.empty();
  o.detail = "every subcommand run twice, " + std::to_string(ta.size()) + " files compared, " +
             std::to_string(differ) + " differ" + (first.empty() ? "" : " (first: " + first + ")");
  return o;
}

/// Frozen segments of the pretrained encoder against the probe's encoder,
/// byte for byte, for every frozen arm of the smoke run.
std::string frozen_bytes_check(const fs::path& run, std::size_t& arms_checked) {
  for (const auto& v : kVariants) {
    const std::string variant = v.substr(0, v.find('-')) + "-" + v.substr(v.find('/') + 1);
    const auto pre = load_checkpoint(run / "pretrain" / variant / "model.ckpt").group("image");
    std::string arm_dir = v + "/frozen";
    std::replace(arm_dir.begin(), arm_dir.end(), '/', '-');
    const auto post = load_checkpoint(run / "probe" / arm_dir / "probe.ckpt").group("image");
    const auto split = freeze_split(pre);
    if (split.frozen.empty()) return v + ": no frozen segments";
    for (const auto& name : split.frozen) {
      const auto x = pre.segment(name), y = post.segment(name);
      if (x.size() != y.size() || std::memcmp(x.data(), y.data(), x.size() * sizeof(double)))
        return v + "/frozen: segment " + name + " changed";
    }
    ++arms_checked;
  }
  return "";
}

Outcome frozen_contract(const fs::path& smoke_run, const fs::path& matrix_dir, bool have_matrix) {
  std::size_t byte_arms = 0;
  std::string err;
  try {
    err = frozen_bytes_check(smoke_run, byte_arms);
  } catch (const std::exception& e) {
    err = e.what();
  }
  if (!err.empty()) return {false, err};
  std::size_t flagged = 0, unchanged = 0;
  if (have_matrix) {
    for (const auto& e : fs::recursive_directory_iterator(matrix_dir / "runs")) {
      if (e.path().filename() != "frozen.txt") continue;
      const std::string arm = e.path().parent_path().parent_path().filename().string();
      if (arm.find("frozen") == std::string::npos) continue;
      ++flagged;
      const std::string text = read_file(e.path());
      if (text.find("frozen_unchanged yes") != std::string::npos) ++unchanged;
    }
  }
  Outcome o;
  o.pass = have_matrix && flagged > 0 && flagged == unchanged;
  o.detail = std::to_string(byte_arms) + " frozen arms byte-identical after probing; matrix: " +
             std::to_string(unchanged) + "/" + std::to_string(flagged) +
             " frozen runs with unchanged frozen hash";
  return o;
}

struct MatrixRun {
  bool ok = false;
  double seconds = 0.0;
  std::vector<ResultsRow> table;
};

MatrixRun run_default_matrix(const Cli& cli, const fs::path& config, const fs::path& out) {
  MatrixRun m;
  fs::remove_all(out);
  const auto t0 = Clock::now();
  const int code = cli.run("default-matrix", "matrix --config '" + config.string() + "' --out '" +
                                                 out.string() + "'");
  m.seconds = seconds_since(t0);
  if (code != 0) return m;
  std::ifstream in(out / "matrix" / "results.csv");
  m.table = read_results_csv(in);
  m.ok = true;
  return m;
}

Outcome local_advantage(const MatrixRun& m, std::size_t expected_seeds) {
  if (!m.ok) return {false, "matrix run failed"};
  auto mean_auc = [&](const std::string& arm, const std::string& bound) -> const ResultsRow* {
    for (const auto& r : m.table)
      if (r.arm == arm && r.bound == bound && r.probe_mode == "finetune" && r.task == "mean")
        return &r;
    return nullptr;
  };
  const ResultsRow* base = mean_auc("image-only", "none");
  if (!base || base->n_seeds != expected_seeds) return {false, "image-only row missing"};
  Outcome o{true, "image-only " + fmt(base->mean_auc)};
  for (const char* bound : {"mine_dv", "cpc"}) {
    const ResultsRow* local = mean_auc("local-mi", bound);
    const ResultsRow* global = mean_auc("global-mi", bound);
    if (!local || !global || local->n_seeds != expected_seeds ||
        global->n_seeds != expected_seeds)
      return {false, std::string("missing rows for ") + bound};
    const double margin = local->mean_auc - base->mean_auc;
    const bool ok = local->mean_auc >= global->mean_auc && margin >= kLocalMargin;
    o.pass = o.pass && ok;
    o.detail += std::string("; ") + bound + ": local " + fmt(local->mean_auc) + " global " +
                fmt(global->mean_auc) + " local-image " + (margin >= 0 ? "+" : "") + fmt(margin);
  }
  o.pass = o.pass && m.seconds < kMatrixSeconds;
  o.detail += "; " + std::to_string(expected_seeds) + " seeds, margin >= +" +
              fmt(kLocalMargin, 2) + ", " + fmt(m.seconds / 60.0, 1) + " min";
  return o;
}

void report(int id, const std::string& name, const Outcome& o, int& failures) {
  std::cout << (o.pass ? "PASS" : "FAIL") << " [" << id << "] " << name << ": " << o.detail
            << std::endl;
  if (!o.pass) ++failures;
}

Outcome guarded(const std::function<Outcome()>& f) {
  try {
    return f();
  } catch (const std::exception& e) {
    return {false, std::string("error: ") + e.what()};
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  fs::path cli_path, default_config, smoke_config, work;
  app.add_option("--cli", cli_path, "limi executable")->required();
  app.add_option("--config", default_config, "Default experiment config")->required();
  app.add_option("--smoke-config", smoke_config, "Small config for CLI round trips")->required();
  app.add_option("--work", work, "Scratch directory")->required();
  CLI11_PARSE(app, argc, argv);

  fs::create_directories(work / "logs");
  const Cli cli{fs::absolute(cli_path), fs::absolute(work / "logs")};
  const ExperimentConfig config = load_config(default_config);

  int failures = 0;
  report(1, "Gaussian MI recovery (mine_dv)", guarded([&] { return gaussian_mine(config); }),
         failures);
  report(2, "InfoNCE cap and recovery (cpc)", guarded([&] { return infonce_cap(config); }),
         failures);
  report(3, "Exact DV bound below true MI", guarded(exact_bound), failures);
  report(4, "Chain-rule identity", guarded(chain_rule), failures);
  report(5, "Degenerate local/global equivalence", guarded(degenerate), failures);
  report(6, "Gradient suite", guarded(gradient_suite), failures);

  MatrixRun matrix;
  try {
    matrix = run_default_matrix(cli, fs::absolute(default_config), fs::absolute(work / "default"));
  } catch (const std::exception& e) {
    std::cerr << "matrix: " << e.what() << '\n';
  }
  report(7, "Local MI beats global MI and image-only (finetune)",
         guarded([&] { return local_advantage(matrix, config.seeds.size()); }), failures);

  const Outcome det =
      guarded([&] { return determinism(cli, fs::absolute(smoke_config), fs::absolute(work)); });
  report(8, "Frozen-encoder contract", guarded([&] {
           return frozen_contract(fs::absolute(work / "run-a"),
                                  fs::absolute(work / "default" / "matrix"), matrix.ok);
         }),
         failures);
  report(9, "AUC equals pair counting", guarded(auc_oracle), failures);
  report(10, "Byte-identical reruns", det, failures);
  return failures == 0 ? 0 : 1;
}

// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Criteria 6 and 7 train real models and take several
// minutes on one core.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "samsgl/cli.hpp"

using namespace samsgl;
namespace fs = std::filesystem;
using engine::Tensor;
using T = Tensor<double>;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(int id, const std::string& name, const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!o.pass) ++failures;
  char timing[32];
  std::snprintf(timing, sizeof timing, "%.1f s", secs);
  std::cout << (o.pass ? "PASS" : "FAIL") << "  " << id << ". " << name << " : " << o.detail << " [" << timing
            << "]" << std::endl;
}

std::vector<double> uniform(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << v;
  return s.str();
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

template <typename S>
std::vector<double> vals(const S& t) {
  return {t.values().begin(), t.values().end()};
}

// ---------------------------------------------------------------- 1

Outcome correlation_oracle() {
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<std::size_t> len(2, 64), width(1, 8), nodes(1, 4);
  double worst = 0.0;
  const auto start = std::chrono::steady_clock::now();
  for (int c = 0; c < 1000; ++c) {
    const std::size_t L = len(rng), D = width(rng), N = nodes(rng);
    auto ref = uniform(L * D, rng);
    auto key = uniform(N * L * D, rng);
    auto fast = alignment::correlation_scores(T::constant({1, L, D}, ref), T::constant({1, N, L, D}, key));
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t t = 0; t < L; ++t) {
        double z = 0.0;
        for (std::size_t u = 0; u < L; ++u)
          for (std::size_t d = 0; d < D; ++d) z += ref[u * D + d] * key[(i * L + (u + L - t) % L) * D + d];
        worst = std::max(worst, std::abs(z - fast.values()[i * L + t]));
      }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {worst <= 1e-10 && secs < 10.0, "1000 cases, max |fft - brute| = " + fmt(worst, 3) + " (limit 1e-10)"};
}

// ---------------------------------------------------------------- 2

Outcome delay_recovery() {
  data::SynthSpec spec;
  spec.nodes = 16;
  spec.steps = 48;
  spec.max_delay = 24;
  auto recover = [&](std::uint64_t seed, double noise, std::size_t& correct) {
    auto s = spec;
    s.noise = noise;
    auto synth = data::synth_shifted_copies(s, seed);
    auto x = T::constant({1, 16, 48, 1}, data::make_window(synth.dataset, 0, 48, 0).input);
    auto ref = alignment::reference_series(x, alignment::ReferenceStrategy::node(0));
    auto got = alignment::delays_from_scores(alignment::correlation_scores(ref, x));
    std::size_t ok = 0;
    for (std::size_t i = 0; i < 16; ++i) ok += got[i] == synth.delays[i];
    correct += ok;
    return ok == 16;
  };
  const auto start = std::chrono::steady_clock::now();
  std::size_t exact_seeds = 0, clean_nodes = 0, noisy_nodes = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    exact_seeds += recover(seed, 0.0, clean_nodes);
    recover(1000 + seed, 0.1, noisy_nodes);
  }
  const double rate = static_cast<double>(noisy_nodes) / 1600.0;
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {exact_seeds == 100 && rate >= 0.95 && secs < 30.0,
          "noiseless exact seeds " + std::to_string(exact_seeds) + "/100, noisy (0.1) node recovery " +
              fmt(100.0 * rate) + "% (limit 95%)"};
}

// ---------------------------------------------------------------- 3

Outcome alignment_round_trip() {
  std::mt19937_64 rng(303);
  std::uniform_int_distribution<std::size_t> dim(1, 6), len(1, 40);
  std::size_t exact = 0;
  for (int c = 0; c < 500; ++c) {
    const std::size_t B = dim(rng), N = dim(rng), L = len(rng), D = dim(rng);
    auto x = uniform(B * N * L * D, rng);
    alignment::DelayVector tau(B * N);
    std::uniform_int_distribution<std::size_t> lag(0, L - 1);
    for (auto& t : tau) t = lag(rng);
    auto xt = T::constant({B, N, L, D}, x);
    auto back = alignment::align_back(alignment::align(xt, tau), tau);
    exact += bit_equal(vals(back), x);
  }
  return {exact == 500, std::to_string(exact) + "/500 cases bit-identical"};
}

// ---------------------------------------------------------------- 4

Outcome gradient_integrity() {
  std::mt19937_64 rng(404);
  std::vector<std::array<double, 2>> xy(3);
  for (auto& p : xy) p = {uniform(1, rng, 0, 1)[0], uniform(1, rng, 0, 1)[0]};
  auto geo = graphs::Geometry::planar(xy);
  blocks::ModelConfig c;
  c.nodes = 3;
  c.history = 6;
  c.horizon = 4;
  c.hidden = 4;
  c.blocks = 2;
  c.fc_width = 16;
  c.embed_dim = 4;
  c.local_hidden = 4;
  c.seed = 4;
  blocks::Model<double> model(c, &geo);
  // Zero-initialized biases can sit exactly on a relu kink; evaluate at a
  // generic point instead.
  for (const auto& [name, t] : model.params().entries()) {
    auto v = vals(t);
    auto jitter = uniform(v.size(), rng, -0.1, 0.1);
    for (std::size_t k = 0; k < v.size(); ++k) v[k] += jitter[k];
    auto p = t;
    p.assign(v);
  }
  auto x = T::constant({2, 3, 6, 1}, uniform(36, rng));
  auto w = T::constant({2, 3, 4, 1}, uniform(24, rng));
  std::mt19937_64 noise_rng(9);
  blocks::ForwardTrace<double> trace;
  model.forward(x, graphs::Mode::train, &noise_rng, {}, &trace);
  blocks::ForwardControl control{&trace.noise, &trace.delays};
  auto rep = engine::grad_check<double>(
      [&] { return engine::sum(engine::mul(model.forward(x, graphs::Mode::train, nullptr, control), w)); },
      model.params().entries(), 1e-6, 1e-4);
  std::string worst_name;
  double worst = 0.0;
  for (const auto& e : rep.entries)
    if (e.max_rel_error >= worst) {
      worst = e.max_rel_error;
      worst_name = e.name;
    }
  return {rep.passed, std::to_string(rep.entries.size()) + " parameter arrays, worst relative error " + fmt(worst, 3) +
                          " in " + worst_name + " (limit 1e-4)"};
}

// ---------------------------------------------------------------- 5

Outcome gumbel_checks() {
  std::mt19937_64 rng(505);
  bool eval_exact = true, in_range = true;
  for (int c = 0; c < 200; ++c) {
    const std::size_t n = 1 + c % 12;
    auto logits = uniform(n * n, rng, -40, 40);
    auto raw = engine::sigmoid_open(T::constant({n, n}, logits));
    eval_exact = eval_exact && bit_equal(vals(graphs::gumbel_regularize(raw, 0.5, graphs::Mode::eval, &rng)), vals(raw));
    for (double s : {0.01, 0.1, 0.5, 1.0, 10.0}) {
      auto a = graphs::gumbel_regularize(raw, s, graphs::Mode::train, &rng);
      for (double v : a.values()) in_range = in_range && v > 0.0 && v < 1.0;
    }
  }
  auto draws = graphs::sample_gumbel(1000000, rng);
  double mean = 0.0;
  for (double g : draws) mean += g;
  mean /= static_cast<double>(draws.size());
  const double gamma = 0.57721566490153286;
  const bool mean_ok = std::abs(mean - gamma) <= 0.01;
  return {eval_exact && in_range && mean_ok, std::string("eval identity ") + (eval_exact ? "exact" : "BROKEN") +
                                                 ", train entries in (0,1) " + (in_range ? "always" : "NOT always") +
                                                 ", Gumbel mean over 1e6 draws " + fmt(mean, 6) + " (gamma " +
                                                 fmt(gamma, 6) + ")"};
}

// ---------------------------------------------------------------- shared runs

struct Workspace {
  fs::path dir;
  std::string data_path;
  cli::TrainOptions train_options() const {
    cli::TrainOptions o;
    o.data_path = data_path;
    o.out_dir = (dir / "runs").string();
    // Desk-scale width; everything else keeps its default.
    o.overrides = {{"hidden", "8"}, {"blocks", "2"}, {"fc_width", "64"}, {"epochs", "30"}, {"seed", "0"}};
    return o;
  }
};

Workspace make_workspace() {
  Workspace w;
  w.dir = fs::temp_directory_path() / "samsgl-acceptance";
  fs::remove_all(w.dir);
  fs::create_directories(w.dir);
  cli::GenOptions gen;
  gen.spec.nodes = 16;
  gen.spec.steps = 5000;
  gen.spec.noise = 0.05;
  gen.seed = 1;
  gen.out = (w.dir / "delayed.stgf").string();
  cli::cmd_gen(gen);
  w.data_path = gen.out;
  return w;
}

cli::EvalOutcome last_eval;

Outcome end_to_end(const Workspace& w) {
  auto o = w.train_options();
  o.run_name = "e2e";
  const auto start = std::chrono::steady_clock::now();
  auto run = cli::cmd_train(o);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!run.report.test) return {false, "run diverged: " + run.report.failure};
  cli::EvalOptions ev;
  ev.checkpoint_path = run.checkpoint_path;
  ev.data_path = w.data_path;
  last_eval = cli::cmd_eval(ev);
  const double model = last_eval.model.mae, base = last_eval.persistence.mae;
  const double gain = 1.0 - model / base;
  return {gain >= 0.20 && secs < 600.0,
          "N=16 L=L'=12 5000 steps 30 epochs: test MAE " + fmt(model) + " vs persistence " + fmt(base) + " (" +
              fmt(100.0 * gain, 3) + "% lower, need >= 20%), training " + fmt(secs, 4) + " s"};
}

Outcome ablation_ordering(const Workspace& w) {
  auto o = w.train_options();
  o.run_name = "acceptance";
  auto r = cli::cmd_ablate(o);
  std::cerr << r.table;
  const auto& full = r.rows[0];
  const bool ok = !full.diverged && full.mae < r.rows[1].mae && full.mae < r.rows[2].mae;
  std::string detail;
  for (const auto& row : r.rows) detail += row.label + " " + fmt(row.mae) + (row.diverged ? " (diverged)" : "") + ", ";
  return {ok, detail + "need full < w/o SA and full < w/o MG-G"};
}

Outcome determinism(const Workspace& w) {
  std::vector<cli::TrainOutcome> runs;
  for (int i = 0; i < 2; ++i) {
    auto o = w.train_options();
    o.overrides.emplace_back("epochs", "3");
    o.out_dir = (w.dir / ("repro" + std::to_string(i))).string();
    o.run_name = "repro";
    runs.push_back(cli::cmd_train(o));
  }
  const auto& a = runs[0].report.history;
  const auto& b = runs[1].report.history;
  bool curves = a.size() == b.size() && !a.empty();
  for (std::size_t e = 0; curves && e < a.size(); ++e)
    curves = std::memcmp(&a[e].train_loss, &b[e].train_loss, sizeof(double)) == 0 &&
             std::memcmp(&a[e].val_mae, &b[e].val_mae, sizeof(double)) == 0;
  auto bytes = [](const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  };
  const bool ck = bytes(runs[0].checkpoint_path) == bytes(runs[1].checkpoint_path) &&
                  !bytes(runs[0].checkpoint_path).empty();
  return {curves && ck, std::string("two 3-epoch runs: loss curves ") + (curves ? "bit-identical" : "DIFFER") +
                            ", checkpoints " + (ck ? "byte-identical" : "DIFFER")};
}

Outcome format_round_trips(const Workspace& w) {
  std::mt19937_64 rng(909);
  std::size_t stgf_ok = 0;
  for (int c = 0; c < 50; ++c) {
    data::Dataset ds;
    ds.steps = 1 + c;
    ds.nodes = 1 + c % 7;
    ds.channels = 1 + c % 3;
    ds.values = uniform(ds.steps * ds.nodes * ds.channels, rng, -1e3, 1e3);
    if (c % 2) {
      ds.dtype = data::DType::f32;
      for (auto& v : ds.values) v = static_cast<float>(v);
    }
    if (c % 3 == 1) {
      std::vector<std::array<double, 2>> xy(ds.nodes);
      for (auto& p : xy) p = {uniform(1, rng)[0], uniform(1, rng)[0]};
      ds.geometry = graphs::Geometry::planar(xy);
    }
    const auto path = (w.dir / "rt.stgf").string();
    data::write_stgf(path, ds);
    auto back = data::load_stgf(path);
    stgf_ok += bit_equal(back.values, ds.values) && back.dtype == ds.dtype &&
               back.geometry.coords == ds.geometry.coords && data::encode_stgf(back) == data::encode_stgf(ds);
  }

  blocks::ModelConfig mc;
  mc.nodes = 5;
  mc.hidden = 6;
  mc.blocks = 2;
  mc.fc_width = 16;
  mc.local_graph = false;
  mc.seed = 77;
  blocks::Model<double> model(mc, nullptr);
  const auto ck_path = (w.dir / "rt.sgck").string();
  blocks::save_checkpoint(ck_path, "seed = 77\n", model.params());
  auto ck = blocks::load_checkpoint(ck_path);
  bool ck_ok = ck.config_text == "seed = 77\n" && ck.entries.size() == model.params().entries().size();
  for (std::size_t i = 0; ck_ok && i < ck.entries.size(); ++i)
    ck_ok = ck.entries[i].name == model.params().entries()[i].first &&
            bit_equal(ck.entries[i].values, vals(model.params().entries()[i].second));

  std::size_t cfg_ok = 0;
  for (int c = 0; c < 50; ++c) {
    config::RunConfig rc;
    rc.model.hidden = 1 + rng() % 100;
    rc.model.temperature = uniform(1, rng, 0.01, 5)[0];
    rc.train.schedule.initial = uniform(1, rng, 1e-5, 1e-1)[0];
    rc.train.schedule.milestones = {static_cast<std::size_t>(rng() % 50), static_cast<std::size_t>(50 + rng() % 50)};
    rc.model.seed = rng();
    if (c % 2) rc.model.alpha = uniform(1, rng, 0.1, 3)[0];
    const auto once = config::serialize(config::parse(config::serialize(rc)));
    cfg_ok += once == config::serialize(rc) && config::serialize(config::parse(once)) == once;
  }
  return {stgf_ok == 50 && ck_ok && cfg_ok == 50, "STGF " + std::to_string(stgf_ok) + "/50 bit-exact, checkpoint " +
                                                      (ck_ok ? "bit-exact" : "MISMATCH") + ", config " +
                                                      std::to_string(cfg_ok) + "/50 idempotent"};
}

Outcome per_horizon_reporting() {
  if (last_eval.model.horizon_mae.empty()) return {false, "no evaluation from criterion 6 available"};
  double mean = 0.0;
  for (double v : last_eval.model.horizon_mae) mean += v;
  mean /= static_cast<double>(last_eval.model.horizon_mae.size());
  const double gap = std::abs(mean - last_eval.model.mae);
  std::ostringstream table;
  cli::print_metrics_table(table, last_eval, data::Split::test);
  const auto text = table.str();
  bool highlighted = true;
  for (const char* mark : {"MAE@3", "MAE@6", "MAE@12", "*3=", "*6=", "*12="})
    highlighted = highlighted && text.find(mark) != std::string::npos;
  std::cerr << text;
  return {gap <= 1e-10 && highlighted, "|mean(per-horizon) - overall| = " + fmt(gap, 3) +
                                           " (limit 1e-10), horizons 3/6/12 " +
                                           (highlighted ? "highlighted" : "NOT highlighted")};
}

}  // namespace

int main() {
  criterion(1, "correlation oracle equivalence", correlation_oracle);
  criterion(2, "delay recovery", delay_recovery);
  criterion(3, "alignment round trip", alignment_round_trip);
  criterion(4, "gradient integrity", gradient_integrity);
  criterion(5, "Gumbel regularization", gumbel_checks);
  Workspace w;
  try {
    w = make_workspace();
  } catch (const std::exception& e) {
    std::cerr << "could not create the synthetic dataset: " << e.what() << "\n";
  }
  criterion(6, "end-to-end learning", [&] { return end_to_end(w); });
  criterion(7, "ablation ordering", [&] { return ablation_ordering(w); });
  criterion(8, "determinism", [&] { return determinism(w); });
  criterion(9, "format round trips", [&] { return format_round_trips(w); });
  criterion(10, "per-horizon reporting", per_horizon_reporting);
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}

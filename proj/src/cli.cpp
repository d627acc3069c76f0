#include "samsgl/cli.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

namespace samsgl::cli {

namespace fs = std::filesystem;

namespace {

std::string utc_stamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << text)) throw IoError("cannot write '" + path + "'");
}

config::RunConfig base_config(const TrainOptions& o) {
  auto cfg = o.config_path.empty() ? config::RunConfig{} : config::load(o.config_path);
  for (const auto& [k, v] : o.overrides) config::set_value(cfg, k, v);
  return cfg;
}

data::Dataset load_dataset(const std::string& data_path, const std::string& geometry_path,
                           const data::SplitRatios& split) {
  auto ds = data::load_stgf(resolve_data_path(data_path));
  if (!geometry_path.empty()) {
    auto geom = graphs::load_geometry(resolve_data_path(geometry_path));
    if (geom.nodes != ds.nodes) {
      throw DataError("geometry lists " + std::to_string(geom.nodes) + " nodes, dataset has " +
                      std::to_string(ds.nodes));
    }
    ds.geometry = std::move(geom);
  }
  ds.ratios = split;
  return data::normalize(ds);
}

blocks::ModelConfig model_config(const config::RunConfig& cfg, const data::Dataset& ds) {
  auto mc = cfg.model;
  mc.nodes = ds.nodes;
  mc.input_channels = ds.channels;
  mc.output_channels = ds.channels;
  mc.validate();
  return mc;
}

template <typename T>
train::RunReport run_training(const config::RunConfig& cfg, const data::Dataset& ds, const std::string& text,
                              const std::string& checkpoint, std::ostream& log) {
  blocks::Model<T> model(model_config(cfg, ds), &ds.geometry);
  train::TrainOptions opts;
  opts.checkpoint_path = checkpoint;
  opts.config_text = text;
  opts.log = &log;
  return train::train_loop(model, ds, cfg.train, opts);
}

template <typename T>
EvalOutcome run_eval(const config::RunConfig& cfg, const blocks::Checkpoint& ckpt, const data::Dataset& ds,
                     const EvalOptions& o) {
  blocks::Model<T> model(model_config(cfg, ds), &ds.geometry);
  blocks::apply_checkpoint(model.params(), ckpt);
  EvalOutcome out;
  std::vector<train::DumpRow> rows;
  out.model = train::evaluate(model, ds, o.split, o.dump_path.empty() ? nullptr : &rows);
  const auto& mc = model.config();
  out.persistence = train::evaluate_predictor(
      ds, o.split, mc.history, mc.horizon,
      train::persistence_predictor(ds.nodes, mc.history, mc.horizon, ds.channels));
  if (!o.dump_path.empty()) {
    std::ofstream f(o.dump_path);
    if (!f) throw IoError("cannot write '" + o.dump_path + "'");
    f << "origin,node,horizon,channel,predicted,actual\n" << std::setprecision(17);
    for (const auto& r : rows)
      f << r.origin << ',' << r.node << ',' << r.horizon << ',' << r.channel << ',' << r.predicted << ',' << r.actual
        << '\n';
    if (!f) throw IoError("write failed for '" + o.dump_path + "'");
    out.dump_rows = rows.size();
  }
  return out;
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

}  // namespace

Ablation parse_ablation(const std::string& text) {
  if (text == "none" || text == "full") return Ablation::none;
  if (text == "sa") return Ablation::sa;
  if (text == "mg-g") return Ablation::mg_g;
  if (text == "mg-l") return Ablation::mg_l;
  throw UsageError("--ablate must be sa, mg-g or mg-l, got '" + text + "'");
}

std::string ablation_label(Ablation a) {
  switch (a) {
    case Ablation::none: return "full";
    case Ablation::sa: return "w/o SA";
    case Ablation::mg_g: return "w/o MG-G";
    case Ablation::mg_l: return "w/o MG-L";
  }
  return "?";
}

void apply_ablation(config::RunConfig& cfg, Ablation a) {
  switch (a) {
    case Ablation::none: break;
    case Ablation::sa: cfg.model.series_alignment = false; break;
    case Ablation::mg_g: cfg.model.global_graphs = false; break;
    case Ablation::mg_l: cfg.model.local_graph = false; break;
  }
}

std::string resolve_data_path(const std::string& path) {
  if (path.empty()) throw UsageError("no data path given");
  fs::path p(path);
  if (p.is_relative() && !fs::exists(p)) {
    if (const char* dir = std::getenv("SAMSGL_DATA_DIR"); dir && *dir) {
      auto candidate = fs::path(dir) / p;
      if (fs::exists(candidate)) return candidate.string();
    }
  }
  return path;
}

// ------------------------------------------------------------------ commands

data::SynthResult cmd_gen(const GenOptions& o) {
  if (o.out.empty()) throw UsageError("gen needs --out");
  auto result = data::synth_delayed_diffusion(o.spec, o.seed);
  result.dataset.dtype = o.dtype;
  data::write_stgf(o.out, result.dataset);
  std::string sidecar;
  for (auto d : result.delays) sidecar += std::to_string(d) + "\n";
  write_text(o.out + ".delays.txt", sidecar);
  return result;
}

TrainOutcome cmd_train(const TrainOptions& o) {
  TrainOutcome out;
  out.config = base_config(o);
  apply_ablation(out.config, o.ablation);
  const auto ds = load_dataset(o.data_path, o.geometry_path, out.config.split);
  const auto text = config::serialize(out.config);
  out.config_hash = config::hash(out.config);

  out.run_dir = (fs::path(o.out_dir) / ((o.run_name.empty() ? utc_stamp() : o.run_name) + "-" + out.config_hash)).string();
  fs::create_directories(out.run_dir);
  write_text((fs::path(out.run_dir) / "config.txt").string(), text);
  out.checkpoint_path = (fs::path(out.run_dir) / "checkpoint.sgck").string();

  const auto log_path = (fs::path(out.run_dir) / "report.jsonl").string();
  std::ofstream log(log_path);
  if (!log) throw IoError("cannot write '" + log_path + "'");
  out.report = out.config.train.precision == train::Precision::f64
                   ? run_training<double>(out.config, ds, text, out.checkpoint_path, log)
                   : run_training<float>(out.config, ds, text, out.checkpoint_path, log);
  write_text((fs::path(out.run_dir) / "summary.json").string(), train::summary_json(out.report) + "\n");
  if (!out.report.checkpoint_written) out.checkpoint_path.clear();

  if (o.progress) {
    for (const auto& e : out.report.history)
      *o.progress << "epoch " << e.epoch << "  lr " << e.lr << "  train " << fixed(e.train_loss) << "  val MAE "
                  << fixed(e.val_mae) << "  RMSE " << fixed(e.val_rmse) << "  (" << fixed(e.seconds, 1) << " s)\n";
  }
  return out;
}

EvalOutcome cmd_eval(const EvalOptions& o) {
  const auto ckpt = blocks::load_checkpoint(o.checkpoint_path);
  const auto cfg = config::parse(ckpt.config_text);
  const auto ds = load_dataset(o.data_path, o.geometry_path, cfg.split);
  return cfg.train.precision == train::Precision::f64 ? run_eval<double>(cfg, ckpt, ds, o)
                                                      : run_eval<float>(cfg, ckpt, ds, o);
}

void print_metrics_table(std::ostream& out, const EvalOutcome& r, data::Split split) {
  out << "split: " << data::to_string(split) << "  windows: " << r.model.windows << "\n";
  out << std::left << std::setw(14) << "" << std::setw(12) << "MAE" << std::setw(12) << "RMSE";
  const auto horizons = r.model.horizon_mae.size();
  for (std::size_t h : {3, 6, 12})
    if (h <= horizons) out << std::setw(12) << ("MAE@" + std::to_string(h));
  out << "\n";
  auto row = [&](const std::string& name, const train::Metrics& m) {
    out << std::setw(14) << name << std::setw(12) << fixed(m.mae) << std::setw(12) << fixed(m.rmse);
    for (std::size_t h : {3, 6, 12})
      if (h <= horizons) out << std::setw(12) << fixed(m.horizon_mae[h - 1]);
    out << "\n";
  };
  row("model", r.model);
  row("persistence", r.persistence);
  out << "per-horizon MAE:";
  for (std::size_t h = 0; h < horizons; ++h) {
    const bool mark = h + 1 == 3 || h + 1 == 6 || h + 1 == 12;
    out << ' ' << (mark ? "*" : "") << (h + 1) << '=' << fixed(r.model.horizon_mae[h]);
  }
  out << "\n" << std::right;
}

AblateOutcome cmd_ablate(const TrainOptions& o) {
  if (o.ablation != Ablation::none) throw UsageError("ablate runs every variant; do not pass --ablate");
  const auto shared_hash = config::hash(base_config(o));
  const auto base_name = o.run_name.empty() ? utc_stamp() : o.run_name;
  AblateOutcome out;
  for (auto a : {Ablation::none, Ablation::sa, Ablation::mg_g, Ablation::mg_l}) {
    auto opts = o;
    opts.ablation = a;
    opts.out_dir = (fs::path(o.out_dir) / ("ablate-" + base_name + "-" + shared_hash)).string();
    opts.run_name = a == Ablation::none ? "full" : "wo-" + std::string(a == Ablation::sa     ? "sa"
                                                                        : a == Ablation::mg_g ? "mg-g"
                                                                                              : "mg-l");
    auto run = cmd_train(opts);
    AblationRow row{ablation_label(a), 0.0, 0.0, shared_hash, run.report.diverged};
    if (run.report.test) {
      row.mae = run.report.test->mae;
      row.rmse = run.report.test->rmse;
    }
    out.rows.push_back(row);
  }
  std::ostringstream t;
  t << "config " << shared_hash << "\n";
  t << std::left << std::setw(12) << "variant" << std::setw(12) << "MAE" << std::setw(12) << "RMSE" << "\n";
  for (const auto& r : out.rows)
    t << std::setw(12) << r.label << std::setw(12) << fixed(r.mae) << std::setw(12) << fixed(r.rmse)
      << (r.diverged ? "diverged" : "") << "\n";
  out.table = t.str();
  fs::create_directories(o.out_dir);
  write_text((fs::path(o.out_dir) / ("ablate-" + base_name + "-" + shared_hash) / "table.txt").string(), out.table);
  return out;
}

// ------------------------------------------------------------------ entry point

int run(int argc, const char* const* argv) {
  CLI::App app{"Spatio-temporal forecasting with series-aligned multi-scale graphs"};
  app.require_subcommand(1);

  GenOptions gen;
  std::string gen_dtype = "f64";
  auto* gen_cmd = app.add_subcommand("gen", "write a synthetic delayed-diffusion dataset");
  gen_cmd->add_option("--nodes", gen.spec.nodes, "node count")->capture_default_str();
  gen_cmd->add_option("--steps", gen.spec.steps, "time steps")->capture_default_str();
  gen_cmd->add_option("--max-delay", gen.spec.max_delay, "delays lie in [0, max-delay)")->capture_default_str();
  gen_cmd->add_option("--components", gen.spec.components, "sinusoids in the base signal")->capture_default_str();
  gen_cmd->add_option("--noise", gen.spec.noise, "noise std relative to the signal std")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "random seed")->capture_default_str();
  gen_cmd->add_option("--dtype", gen_dtype, "f32 or f64")->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "output STGF path")->required();

  std::string import_in, import_out, import_geometry;
  auto* import_cmd = app.add_subcommand("import", "convert time,node,channel,value text to STGF");
  import_cmd->add_option("input", import_in, "delimited text file")->required();
  import_cmd->add_option("--out", import_out, "output STGF path")->required();
  import_cmd->add_option("--geometry", import_geometry, "node coordinates to embed");

  TrainOptions tr;
  std::vector<std::string> sets;
  std::string ablate_flag = "none";
  auto add_train_flags = [&](CLI::App* cmd, bool with_ablate) {
    cmd->add_option("--config", tr.config_path, "key = value config file");
    cmd->add_option("--set", sets, "override one key, key=value (repeatable)");
    cmd->add_option("--data", tr.data_path, "STGF dataset")->required();
    cmd->add_option("--geometry", tr.geometry_path, "coordinates or distance matrix file");
    cmd->add_option("--out", tr.out_dir, "parent directory for run outputs")->capture_default_str();
    cmd->add_option("--run-name", tr.run_name, "run directory prefix (default: UTC timestamp)");
    if (with_ablate) cmd->add_option("--ablate", ablate_flag, "remove one component: sa, mg-g or mg-l");
  };
  auto* train_cmd = app.add_subcommand("train", "train a model");
  add_train_flags(train_cmd, true);
  auto* ablate_cmd = app.add_subcommand("ablate", "train the full model and each ablation");
  add_train_flags(ablate_cmd, false);

  EvalOptions ev;
  std::string split = "test";
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->add_option("--checkpoint", ev.checkpoint_path, "checkpoint file")->required();
  eval_cmd->add_option("--data", ev.data_path, "STGF dataset")->required();
  eval_cmd->add_option("--geometry", ev.geometry_path, "coordinates or distance matrix file");
  eval_cmd->add_option("--split", split, "train, val or test")->capture_default_str();
  eval_cmd->add_option("--dump", ev.dump_path, "write predicted vs. actual series as CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  auto collect_overrides = [&] {
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + s + "'");
      tr.overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
  };

  try {
    if (*gen_cmd) {
      if (gen_dtype == "f32") gen.dtype = data::DType::f32;
      else if (gen_dtype != "f64") throw UsageError("--dtype must be f32 or f64");
      const auto r = cmd_gen(gen);
      std::cout << "wrote " << gen.out << " (" << r.dataset.nodes << " nodes, " << r.dataset.steps << " steps) and "
                << gen.out << ".delays.txt\n";
    } else if (*import_cmd) {
      auto ds = data::import_delimited(resolve_data_path(import_in));
      if (!import_geometry.empty()) {
        ds.geometry = graphs::load_geometry(resolve_data_path(import_geometry));
        if (ds.geometry.nodes != ds.nodes) throw DataError("geometry node count does not match dataset");
      }
      data::write_stgf(import_out, ds);
      std::cout << "wrote " << import_out << " (" << ds.nodes << " nodes, " << ds.steps << " steps, " << ds.channels
                << " channels)\n";
    } else if (*train_cmd) {
      collect_overrides();
      tr.ablation = parse_ablation(ablate_flag);
      tr.progress = &std::cout;
      const auto r = cmd_train(tr);
      std::cout << "run directory: " << r.run_dir << "\n";
      if (r.report.test) {
        std::cout << "test MAE " << fixed(r.report.test->mae) << "  RMSE " << fixed(r.report.test->rmse) << "  ("
                  << fixed(r.report.wall_seconds, 1) << " s)\n";
      }
      if (r.report.diverged) {
        std::cerr << "error: training diverged: " << r.report.failure << "\n";
        return 1;
      }
    } else if (*ablate_cmd) {
      collect_overrides();
      const auto r = cmd_ablate(tr);
      std::cout << r.table;
      for (const auto& row : r.rows)
        if (row.diverged) return 1;
    } else if (*eval_cmd) {
      ev.split = data::parse_split(split);
      const auto r = cmd_eval(ev);
      print_metrics_table(std::cout, r, ev.split);
      if (!ev.dump_path.empty()) std::cout << "dumped " << r.dump_rows << " rows to " << ev.dump_path << "\n";
    }
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const CompatibilityError& e) {
    std::cerr << "incompatible checkpoint: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace samsgl::cli

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "hiermatch/checkpoint.hpp"
#include "hiermatch/config.hpp"
#include "hiermatch/dataset.hpp"
#include "hiermatch/retrieval.hpp"
#include "hiermatch/strokes.hpp"
#include "hiermatch/trainer.hpp"

namespace {

using namespace hiermatch;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct TrainCli {
  std::string config_path;
  std::string data_dir;
  std::string out_prefix;
  std::string log_path;
  bool resume = false;
  bool no_coattn = false;
  bool no_hierarchy = false;
  bool explicit_hierarchy = false;
  std::vector<std::string> overrides;
};

RunConfig load_run_config(const std::string& config_path,
                          const std::vector<std::string>& overrides) {
  RunConfig cfg;
  if (!config_path.empty()) cfg = parse_config_file(config_path);
  for (const auto& assignment : overrides) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--set expects key=value, got '" + assignment + "'");
    apply_config_override(cfg, assignment.substr(0, eq),
                          assignment.substr(eq + 1));
  }
  return cfg;
}

int run_train(const TrainCli& args) {
  RunConfig cfg = load_run_config(args.config_path, args.overrides);
  if (args.no_coattn) cfg.model.no_coattn = true;
  if (args.no_hierarchy) cfg.model.no_hierarchy = true;
  if (args.explicit_hierarchy) cfg.model.explicit_hierarchy = true;

  const Dataset data = read_dataset(args.data_dir);

  TrainState state;
  if (args.resume) {
    LoadedCheckpoint loaded = load_checkpoint(args.out_prefix);
    if (canonical_config(loaded.cfg) != canonical_config(cfg))
      throw ConfigError("resume config does not match the checkpoint: '" +
                        canonical_config(loaded.cfg) + "' vs '" +
                        canonical_config(cfg) + "'");
    if (loaded.d_raw != data.d_raw)
      throw ConfigError("checkpoint d_raw does not match the dataset");
    state = std::move(loaded.state);
  } else {
    state = init_train_state(data.d_raw, cfg);
  }

  std::ofstream log;
  if (!args.log_path.empty()) {
    log.open(args.log_path, args.resume ? std::ios::app : std::ios::trunc);
    if (!log) throw ConfigError("cannot open log file: " + args.log_path);
  }

  const auto on_epoch = [&](const TrainState& s, const EpochStats& stats) {
    save_checkpoint(args.out_prefix, s, cfg, data.d_raw);
    std::ostringstream line;
    line << "epoch " << stats.epoch << " loss " << std::setprecision(12)
         << stats.mean_loss;
    std::cout << line.str() << "\n";
    if (log) log << line.str() << "\n";
  };

  try {
    const TrainSummary summary = train_model(state, data, cfg, on_epoch);
    if (summary.early_stopped)
      std::cout << "early stop: loss plateau after epoch "
                << state.next_epoch - 1 << "\n";
  } catch (const NumericError&) {
    // Dump the last consistent state next to the checkpoint, then re-throw
    // so the caller sees exit code 4.
    save_checkpoint(args.out_prefix + ".dump", state, cfg, data.d_raw);
    std::cerr << "state dumped to " << args.out_prefix << ".dump.manifest\n";
    throw;
  }
  if (state.next_epoch == 0)
    save_checkpoint(args.out_prefix, state, cfg, data.d_raw);
  std::cout << "checkpoint written to " << args.out_prefix << ".manifest\n";
  return kExitOk;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << content;
}

RetrievalReport evaluate_checkpoint(const std::string& checkpoint_prefix,
                                    const Dataset& data,
                                    DetailLevel query_detail) {
  LoadedCheckpoint loaded = load_checkpoint(checkpoint_prefix);
  if (loaded.d_raw != data.d_raw)
    throw ConfigError("checkpoint d_raw does not match the dataset");
  return evaluate_retrieval(data, loaded.state.params, loaded.cfg.model,
                            query_detail,
                            checkpoint_fingerprint(checkpoint_prefix));
}

int run_eval(const std::string& checkpoint_prefix, const std::string& data_dir,
             const std::string& out_prefix, const std::string& detail,
             const std::string& config_path) {
  const Dataset data = read_dataset(data_dir);
  if (!config_path.empty()) {
    const RunConfig expected = parse_config_file(config_path);
    const LoadedCheckpoint loaded = load_checkpoint(checkpoint_prefix);
    if (canonical_config(expected) != canonical_config(loaded.cfg))
      throw ConfigError("checkpoint/config mismatch: checkpoint has '" +
                        canonical_config(loaded.cfg) + "'");
  }
  const RetrievalReport report = evaluate_checkpoint(
      checkpoint_prefix, data, parse_detail_level(detail));
  std::cout << report_table(report);
  if (!out_prefix.empty()) {
    write_text_file(out_prefix + ".txt", report_table(report));
    write_text_file(out_prefix + ".csv", report_csv(report));
  }
  return kExitOk;
}

int run_trace(const std::string& checkpoint_prefix, const std::string& data_dir,
              std::int64_t identity, const std::string& modality,
              const std::string& strokes_path, const std::string& out_path) {
  LoadedCheckpoint loaded = load_checkpoint(checkpoint_prefix);

  Tensor regions;
  MergeTree planted;
  Branch branch = Branch::sketch;
  if (!strokes_path.empty()) {
    const StrokeFile file = parse_stroke_file(strokes_path);
    regions = Tensor::from_values(file.strokes.size(), loaded.d_raw,
                                  stroke_file_features(file, loaded.d_raw));
  } else {
    if (data_dir.empty())
      throw ConfigError("trace needs either --strokes or --data with --identity");
    const Dataset data = read_dataset(data_dir);
    if (data.d_raw != loaded.d_raw)
      throw ConfigError("checkpoint d_raw does not match the dataset");
    const RegionRecord& rec = data.get(identity, parse_modality(modality));
    regions = record_tensor(data, rec);
    planted = rec.tree;
    branch = rec.modality == Modality::sketch ? Branch::sketch : Branch::photo;
  }

  HierarchyTrace script;
  const HierarchyTrace* script_ptr = nullptr;
  if (loaded.cfg.model.explicit_hierarchy) {
    if (planted.empty())
      throw DataError("explicit-hierarchy checkpoint needs a record with a "
                      "planted tree");
    script = tree_to_trace(planted, branch);
    script_ptr = &script;
  }

  const SingleEmbedding emb =
      embed_single(regions, loaded.state.params, loaded.cfg.model, branch,
                   script_ptr, /*keep_soft=*/true);

  std::ostringstream out;
  out << emb.trace.serialize();
  for (const auto& entry : emb.trace.entries) {
    if (entry.soft.empty()) continue;
    out << "# soft level " << entry.level << ":";
    for (const double q : entry.soft) out << ' ' << std::setprecision(6) << q;
    out << "\n";
  }
  if (!planted.empty())
    out << "# fidelity vs planted tree: " << std::setprecision(6)
        << trace_fidelity(emb.trace, planted, regions.rows()) << "\n";
  std::cout << out.str();
  if (!out_path.empty()) write_text_file(out_path, out.str());
  return kExitOk;
}

struct AblateRow {
  std::string mode;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double acc1 = 0.0;
  double acc10 = 0.0;
};

int run_ablate(const std::string& config_path, const std::string& data_dir,
               const std::string& out_dir, std::vector<std::string> modes,
               std::vector<std::uint64_t> seeds,
               const std::vector<std::string>& overrides) {
  const RunConfig base_cfg = load_run_config(config_path, overrides);
  const Dataset data = read_dataset(data_dir);
  std::filesystem::create_directories(out_dir);

  const bool has_trees = !data.get(data.train_identities.at(0),
                                   Modality::sketch).tree.empty();
  if (modes.empty()) {
    modes = {"full", "no_coattn", "no_hierarchy"};
    if (has_trees) modes.push_back("explicit_hierarchy");
    modes.push_back("coarse");
    modes.push_back("coarse++");
  }
  if (seeds.empty()) seeds = {base_cfg.train.seed};

  // The coarse rows re-evaluate the full model on degraded queries, so the
  // full model is always trained even if its row was not requested.
  std::map<std::uint64_t, std::string> full_checkpoints;
  std::vector<AblateRow> rows;

  const auto train_mode = [&](const std::string& mode, std::uint64_t seed) {
    RunConfig cfg = base_cfg;
    cfg.train.seed = seed;
    if (mode == "no_coattn") cfg.model.no_coattn = true;
    if (mode == "no_hierarchy") cfg.model.no_hierarchy = true;
    if (mode == "explicit_hierarchy") cfg.model.explicit_hierarchy = true;
    const std::string prefix = (std::filesystem::path(out_dir) /
                                ("ablate_" + mode + "_seed" +
                                 std::to_string(seed))).string();
    TrainState state = init_train_state(data.d_raw, cfg);
    train_model(state, data, cfg,
                [&](const TrainState& s, const EpochStats&) {
                  save_checkpoint(prefix, s, cfg, data.d_raw);
                });
    if (state.next_epoch == 0) save_checkpoint(prefix, state, cfg, data.d_raw);
    return prefix;
  };

  const auto full_checkpoint = [&](std::uint64_t seed) {
    auto it = full_checkpoints.find(seed);
    if (it == full_checkpoints.end())
      it = full_checkpoints.emplace(seed, train_mode("full", seed)).first;
    return it->second;
  };

  for (const auto& mode : modes) {
    for (const auto seed : seeds) {
      AblateRow row;
      row.mode = mode;
      row.seed = seed;
      try {
        std::string prefix;
        DetailLevel detail = DetailLevel::full;
        if (mode == "full") {
          prefix = full_checkpoint(seed);
        } else if (mode == "coarse" || mode == "coarse++") {
          prefix = full_checkpoint(seed);
          detail = parse_detail_level(mode);
        } else if (mode == "no_coattn" || mode == "no_hierarchy" ||
                   mode == "explicit_hierarchy") {
          prefix = train_mode(mode, seed);
        } else {
          throw ConfigError("unknown ablation mode '" + mode + "'");
        }
        const RetrievalReport report =
            evaluate_checkpoint(prefix, data, detail);
        row.ok = true;
        row.acc1 = report.acc_at_1;
        row.acc10 = report.acc_at_10;
      } catch (const std::exception& e) {
        row.ok = false;
        row.error = e.what();
      }
      rows.push_back(std::move(row));
    }
  }

  std::ostringstream table, csv;
  table << std::left << std::setw(20) << "mode" << std::setw(8) << "seed"
        << std::setw(10) << "acc@1" << std::setw(10) << "acc@10"
        << "status\n";
  csv << "mode,seed,acc_at_1,acc_at_10,status\n";
  for (const auto& row : rows) {
    table << std::left << std::setw(20) << row.mode << std::setw(8) << row.seed;
    if (row.ok)
      table << std::setw(10) << std::fixed << std::setprecision(4) << row.acc1
            << std::setw(10) << row.acc10 << "ok\n";
    else
      table << std::setw(10) << "-" << std::setw(10) << "-"
            << "FAILED: " << row.error << "\n";
    csv << row.mode << ',' << row.seed << ',';
    if (row.ok)
      csv << row.acc1 << ',' << row.acc10 << ",ok\n";
    else
      csv << ",,failed\n";
  }
  std::cout << table.str();
  write_text_file((std::filesystem::path(out_dir) / "ablation.txt").string(),
                  table.str());
  write_text_file((std::filesystem::path(out_dir) / "ablation.csv").string(),
                  csv.str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hiermatch: cross-modal hierarchical sketch-photo retrieval"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  std::string gen_spec, gen_out;
  gen->add_option("--spec", gen_spec, "Spec file (key = value)")->required();
  gen->add_option("--out", gen_out, "Output directory")->required();

  // train
  auto* train = app.add_subcommand("train", "Train a model");
  TrainCli train_args;
  train->add_option("--config", train_args.config_path, "Run config file");
  train->add_option("--data", train_args.data_dir, "Dataset directory")
      ->required();
  train->add_option("--out", train_args.out_prefix, "Checkpoint prefix")
      ->required();
  train->add_option("--log", train_args.log_path, "Append epoch log here");
  train->add_flag("--resume", train_args.resume,
                  "Continue from the checkpoint at --out");
  train->add_flag("--no-coattn", train_args.no_coattn,
                  "Disable cross-modal co-attention");
  train->add_flag("--no-hierarchy", train_args.no_hierarchy,
                  "Replace hierarchy with mean pooling");
  train->add_flag("--explicit-hierarchy", train_args.explicit_hierarchy,
                  "Replay planted merge trees instead of sampling");
  train->add_option("--set", train_args.overrides,
                    "Config override key=value (repeatable)");

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate retrieval accuracy");
  std::string eval_ckpt, eval_data, eval_out, eval_detail = "full",
              eval_config;
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint prefix")->required();
  eval->add_option("--data", eval_data, "Dataset directory")->required();
  eval->add_option("--out", eval_out, "Report prefix (.txt/.csv)");
  eval->add_option("--detail", eval_detail,
                   "Query detail: full, coarse, coarse++");
  eval->add_option("--config", eval_config,
                   "Cross-check this config against the checkpoint");

  // trace
  auto* trace = app.add_subcommand("trace", "Emit the merge trace of one item");
  std::string trace_ckpt, trace_data, trace_strokes, trace_out,
      trace_modality = "sketch";
  std::int64_t trace_identity = 0;
  trace->add_option("--checkpoint", trace_ckpt, "Checkpoint prefix")
      ->required();
  trace->add_option("--data", trace_data, "Dataset directory");
  trace->add_option("--identity", trace_identity, "Record identity id");
  trace->add_option("--modality", trace_modality, "sketch or photo");
  trace->add_option("--strokes", trace_strokes,
                    "Stroke file to trace instead of a dataset record");
  trace->add_option("--out", trace_out, "Write the trace here too");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "Run the ablation matrix");
  std::string ab_config, ab_data, ab_out;
  std::vector<std::string> ab_modes, ab_overrides;
  std::vector<std::uint64_t> ab_seeds;
  ablate->add_option("--config", ab_config, "Run config file");
  ablate->add_option("--data", ab_data, "Dataset directory")->required();
  ablate->add_option("--out", ab_out, "Output directory")->required();
  ablate->add_option("--modes", ab_modes,
                     "Modes to run (default: full no_coattn no_hierarchy "
                     "[explicit_hierarchy] coarse coarse++)");
  ablate->add_option("--seeds", ab_seeds, "Seeds to average over");
  ablate->add_option("--set", ab_overrides,
                     "Config override key=value (repeatable)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (gen->parsed()) {
      const SyntheticSpec spec = parse_synthetic_spec_file(gen_spec);
      write_dataset(gen_out, generate_dataset(spec));
      std::cout << "dataset written to " << gen_out << "\n";
      return kExitOk;
    }
    if (train->parsed()) return run_train(train_args);
    if (eval->parsed())
      return run_eval(eval_ckpt, eval_data, eval_out, eval_detail, eval_config);
    if (trace->parsed())
      return run_trace(trace_ckpt, trace_data, trace_identity, trace_modality,
                       trace_strokes, trace_out);
    if (ablate->parsed())
      return run_ablate(ab_config, ab_data, ab_out, ab_modes, ab_seeds,
                        ab_overrides);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitOk;
}

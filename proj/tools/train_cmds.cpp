// `train`, `sample` and `eval`: the (mode x seed) grid, checkpoints, per-run
// CSV traces and the combined summary table.

#include <algorithm>
#include <cstdio>

#include "commands.hpp"
#include "repdiff/checkpoint.hpp"
#include "repdiff/rng.hpp"
#include "repdiff/trainer.hpp"

namespace repdiff::cli {

namespace {

using nlohmann::json;

const std::vector<std::string> kRunColumns = {
    "epoch",        "mode",        "seed",    "loss_total", "loss_diffusion",
    "loss_repgen",  "loss_lognorm", "alpha_n", "beta_n",     "sliced_wasserstein",
    "alignment_cosine", "wall_ms"};

std::string run_key(const std::string& mode, std::uint64_t seed) {
  return mode + "_seed" + std::to_string(seed);
}

std::string metric_or_empty(const RunRecord& r, const char* name) {
  const auto it = r.metrics.find(name);
  return it == r.metrics.end() ? std::string() : format_double(it->second);
}

CsvTable records_to_csv(const std::string& hash, const std::vector<RunRecord>& records) {
  CsvTable csv(hash, kRunColumns);
  for (const auto& r : records)
    csv.add_row({std::to_string(r.epoch), r.mode, std::to_string(r.seed),
                 format_double(r.loss_total), format_double(r.loss_diffusion),
                 format_double(r.loss_repgen), format_double(r.loss_lognorm),
                 format_double(r.alpha_n), format_double(r.beta_n),
                 metric_or_empty(r, "sliced_wasserstein"),
                 metric_or_empty(r, "alignment_cosine"), format_double(r.wall_ms)});
  return csv;
}

Checkpoint make_checkpoint(const ExperimentConfig& cfg, TrainMode mode, std::uint64_t seed,
                           const TrainResult& res) {
  Checkpoint ck;
  ck.config_hash = cfg.hash;
  json meta;
  meta["mode"] = to_string(mode);
  meta["seed"] = seed;
  meta["schedule"] = {{"kind", cfg.noise.kind},
                      {"T", cfg.noise.T},
                      {"beta_min", cfg.noise.beta_min},
                      {"beta_max", cfg.noise.beta_max}};
  meta["config"] = json::parse(canonical_config_json(cfg));
  meta["diverged"] = res.diverged;
  ck.meta_json = meta.dump();
  ck.params = res.model.params;
  if (res.z_prior.fitted) {
    ck.params["zprior.means"] = res.z_prior.means;
    ck.params["zprior.var"] = Tensor::vector(res.z_prior.var);
    ck.params["zprior.weight"] = Tensor::vector(res.z_prior.weight);
  }
  return ck;
}

/// Rebuilds (model, prior) from a checkpoint; the config must match the hash
/// recorded at train time.
struct RestoredRun {
  TrainMode mode;
  std::uint64_t seed;
  DiffusionModel model;
  ZPrior prior;
};

RestoredRun restore(const ExperimentConfig& cfg, const ToyDataset& data,
                    const std::string& ckpt_path) {
  const Checkpoint ck = load_checkpoint(ckpt_path);
  if (ck.config_hash != cfg.hash)
    throw ConfigError("checkpoint was produced under config hash " + ck.config_hash +
                      ", current config hashes to " + cfg.hash);
  const json meta = json::parse(ck.meta_json);
  RestoredRun run{train_mode_from_string(meta.at("mode").get<std::string>()),
                  meta.at("seed").get<std::uint64_t>(),
                  {},
                  {}};
  const auto setup = resolve_setup(cfg, run.mode, data);
  run.model = DiffusionModel::init(setup.model, derive_seed(run.seed, 0x1717));
  for (auto& [name, t] : run.model.params) {
    const auto it = ck.params.find(name);
    if (it == ck.params.end())
      throw std::runtime_error("checkpoint missing parameter " + name);
    if (!it->second.same_shape(t))
      throw std::runtime_error("checkpoint parameter shape mismatch for " + name);
    t = it->second;
  }
  if (ck.params.count("zprior.means")) {
    run.prior.means = ck.params.at("zprior.means");
    run.prior.var = {ck.params.at("zprior.var").raw().begin(),
                     ck.params.at("zprior.var").raw().end()};
    run.prior.weight = {ck.params.at("zprior.weight").raw().begin(),
                        ck.params.at("zprior.weight").raw().end()};
    run.prior.fitted = true;
  }
  return run;
}

}  // namespace

int cmd_train(const CommonArgs& args) {
  const auto cfg = load_config(args.config_path);
  require_seeds(cfg, {"dataset", "encoders", "modality", "metrics", "sweep"});
  if (cfg.sweep.modes.empty()) throw ConfigError("sweep.modes must list at least one mode");
  ensure_directory(args.out_dir);
  const auto data = resolve_dataset(cfg);

  struct RunOut {
    std::string key;
    std::string mode;
    std::uint64_t seed = 0;
    TrainResult result;
  };
  std::vector<RunOut> outs;
  for (const auto& mode : cfg.sweep.modes)
    for (const auto seed : cfg.sweep.seeds)
      outs.push_back({run_key(mode, seed + args.seed_offset), mode, seed + args.seed_offset,
                      {}});

  std::vector<std::function<void()>> jobs;
  for (auto& out : outs)
    jobs.push_back([&out, &cfg, &data] {
      const TrainMode mode = train_mode_from_string(out.mode);
      const auto setup = resolve_setup(cfg, mode, data);
      out.result = train(mode, data, setup, out.seed);
    });
  run_parallel(effective_workers(args.workers), jobs);

  // aggregation is order-independent: runs are written sorted by key
  std::sort(outs.begin(), outs.end(),
            [](const RunOut& a, const RunOut& b) { return a.key < b.key; });

  CsvTable summary(cfg.hash,
                   {"mode", "seed", "epochs", "final_loss_total", "final_loss_diffusion",
                    "final_loss_repgen", "final_loss_lognorm", "sliced_wasserstein",
                    "alignment_cosine", "diverged"});
  json report;
  report["config_hash"] = cfg.hash;
  report["command"] = "train";
  json runs = json::array();
  bool any_diverged = false;
  for (const auto& out : outs) {
    write_text_file(args.out_dir + "/run_" + out.key + ".csv",
                    records_to_csv(cfg.hash, out.result.records).to_string());
    const TrainMode mode = train_mode_from_string(out.mode);
    save_checkpoint(args.out_dir + "/ckpt_" + out.key + ".rdck",
                    make_checkpoint(cfg, mode, out.seed, out.result));
    const auto& last = out.result.records.back();
    summary.add_row({out.mode, std::to_string(out.seed),
                     std::to_string(out.result.records.size()),
                     format_double(last.loss_total), format_double(last.loss_diffusion),
                     format_double(last.loss_repgen), format_double(last.loss_lognorm),
                     metric_or_empty(last, "sliced_wasserstein"),
                     metric_or_empty(last, "alignment_cosine"),
                     out.result.diverged ? "1" : "0"});
    json jr;
    jr["mode"] = out.mode;
    jr["seed"] = out.seed;
    jr["diverged"] = out.result.diverged;
    if (out.result.diverged) jr["divergence_info"] = out.result.divergence_info;
    for (const auto& [k, v] : last.metrics) jr[k] = v;
    runs.push_back(jr);
    any_diverged = any_diverged || out.result.diverged;
    std::printf("run %-24s final loss %.5f%s\n", out.key.c_str(), last.loss_total,
                out.result.diverged ? "  DIVERGED" : "");
  }
  report["runs"] = runs;
  report["any_diverged"] = any_diverged;
  write_text_file(args.out_dir + "/train_summary.csv", summary.to_string());
  write_json_report(args.out_dir + "/train_report.json", report);
  return any_diverged ? 1 : 0;
}

int cmd_sample(const CommonArgs& args, const std::string& checkpoint, long count) {
  const auto cfg = load_config(args.config_path);
  require_seeds(cfg, {"dataset", "encoders", "modality", "metrics"});
  if (count <= 0) throw ConfigError("sample: --count must be positive");
  ensure_directory(args.out_dir);
  const auto data = resolve_dataset(cfg);
  const auto run = restore(cfg, data, checkpoint);
  const auto setup = resolve_setup(cfg, run.mode, data);

  Tensor samples;
  if (run.mode == TrainMode::rcg)
    samples = rcg_sample(run.model, setup.ns, run.prior, static_cast<std::size_t>(count),
                         derive_seed(setup.eval_seed, 0x5a21));
  else
    samples = ancestral_sample(run.model, setup.ns, static_cast<std::size_t>(count), nullptr,
                               nullptr, derive_seed(setup.eval_seed, 0x5a21));

  CsvTable csv(cfg.hash, {"x0", "x1"});
  for (std::size_t i = 0; i < samples.rows(); ++i)
    csv.add_row({format_double(samples.at(i, 0)), format_double(samples.at(i, 1))});
  const std::string path =
      args.out_dir + "/samples_" + run_key(to_string(run.mode), run.seed) + ".csv";
  write_text_file(path, csv.to_string());
  std::printf("wrote %ld samples to %s\n", count, path.c_str());
  return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& checkpoint) {
  const auto cfg = load_config(args.config_path);
  require_seeds(cfg, {"dataset", "encoders", "modality", "metrics"});
  ensure_directory(args.out_dir);
  const auto data = resolve_dataset(cfg);
  const auto run = restore(cfg, data, checkpoint);
  const auto setup = resolve_setup(cfg, run.mode, data);
  const auto metrics = evaluate_model(run.model, run.mode, run.prior, data, setup);

  json report;
  report["config_hash"] = cfg.hash;
  report["command"] = "eval";
  report["mode"] = to_string(run.mode);
  report["seed"] = run.seed;
  for (const auto& [k, v] : metrics) report[k] = v;
  write_json_report(args.out_dir + "/eval_report.json", report);
  for (const auto& [k, v] : metrics) std::printf("%s = %.6f\n", k.c_str(), v);
  return 0;
}

}  // namespace repdiff::cli

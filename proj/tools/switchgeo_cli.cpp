// switchgeo command-line front end; thin wrappers over the library.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "switchgeo/harness.hpp"
#include "switchgeo/louis.hpp"
#include "switchgeo/metrics.hpp"
#include "switchgeo/rng.hpp"
#include "switchgeo/saem.hpp"
#include "switchgeo/toy_ar1.hpp"
#include "switchgeo/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace switchgeo;

namespace {

json load_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw io_error("cannot open " + path);
  return json::parse(f);
}

int gen_data(const std::string& config_path, const std::string& out_dir) {
  const json cfg = load_json(config_path);
  fs::create_directories(out_dir);
  const std::string kind = cfg.value("kind", "single");
  if (kind == "saem") {
    SaemDataConfig dc;
    dc.T = cfg.value("T", 5000);
    dc.burn_in = cfg.value("burn_in", 1000);
    dc.sigma_obs = cfg.value("sigma_obs", 0.085);
    dc.sigma_proc = cfg.value("sigma_proc", 0.0);
    dc.n_seq = cfg.value("n_seq", 4);
    dc.seed = cfg.value("seed", 0ull);
    const auto bundles = make_saem_dataset(dc);
    for (std::size_t i = 0; i < bundles.size(); ++i)
      save_bundle((fs::path(out_dir) / ("seq" + std::to_string(i))).string(),
                  bundles[i]);
    std::cout << "wrote " << bundles.size() << " sequences to " << out_dir << "\n";
  } else if (kind == "single") {
    LorenzParams lp;
    lp.dt = cfg.value("dt", 0.01);
    const int T = cfg.value("T", 80000);
    const int burn = cfg.value("burn_in", 1000);
    NoiseSpec proc{cfg.value("sigma_proc", 0.0), 0.0, cfg.value("seed", 0ull)};
    TrajectoryBundle full =
        simulate_lorenz(Eigen::Vector3d(1.0, 1.0, 1.0), T + burn, lp, proc);
    TrajectoryBundle b;
    b.states = full.states.bottomRows(T);
    b.observations = b.states;
    b.standardizer = Standardizer::identity(3);
    b.frame = Frame::raw;
    b.meta = full.meta;
    b.meta["burn_in"] = burn;
    const double so = cfg.value("sigma_obs", 0.0);
    if (so > 0.0)
      b = add_observation_noise(b, NoiseSpec{0.0, so, mix64(cfg.value("seed", 0ull) ^ 0x0B5ull)});
    if (cfg.value("standardize", true)) b = standardize(b);
    save_bundle((fs::path(out_dir) / "trajectory").string(), b);
    if (cfg.value("csv", false))
      export_bundle_csv((fs::path(out_dir) / "trajectory.csv").string(), b);
    std::cout << "wrote trajectory (T=" << T << ") to " << out_dir << "\n";
  } else {
    throw config_error("gen-data: unknown kind '" + kind + "'");
  }
  return 0;
}

int train_itf(const std::string& config_path, const std::string& data_dir,
              const std::string& out_stem) {
  const json cfg = load_json(config_path);
  TrainConfig tc;
  tc.M = cfg.value("M", 30);
  tc.P = cfg.value("P", 10);
  tc.tau = cfg.value("tau", 16);
  tc.batch_size = cfg.value("batch_size", 16);
  tc.bptt_len = cfg.value("bptt_len", 200);
  tc.epochs = cfg.value("epochs", 2000);
  tc.batches_per_epoch = cfg.value("batches_per_epoch", 50);
  tc.lr_start = cfg.value("lr_start", 1e-3);
  tc.lr_end = cfg.value("lr_end", 1e-5);
  tc.seed = cfg.value("seed", 0ull);

  const TrajectoryBundle bundle =
      load_bundle((fs::path(data_dir) / "trajectory").string());
  const TrainResult result = train(tc, bundle);
  save_checkpoint(out_stem, result.params,
                  json{{"train_config", cfg},
                       {"final_loss", result.history.back().mean_loss}});
  write_history_csv(out_stem + "_history.csv", result.history);
  std::cout << "final mean loss " << result.history.back().mean_loss << "\n";
  return 0;
}

int fisher_itf(const std::string& ckpt, const std::string& data_dir, int tau,
               double sigma_obs, int segment_start, int segment_len,
               const std::string& out_stem) {
  const Checkpoint ck = load_checkpoint(ckpt);
  const TrajectoryBundle bundle =
      load_bundle((fs::path(data_dir) / "trajectory").string());
  const Mat segment = bundle.observations.middleRows(segment_start, segment_len);
  const CurvatureMatrix m = itf_fisher(ck.params, segment, tau, sigma_obs);
  save_matrix(out_stem, m,
              json{{"source", ckpt},
                   {"source_hash", hash_hex(ck.hash)},
                   {"tau", tau},
                   {"sigma_obs", sigma_obs},
                   {"segment_start", segment_start},
                   {"segment_len", segment_len}});
  std::cout << "tr(I_ITF) = " << format_double(m.trace()) << "\n";
  return 0;
}

int rbpf_louis(const std::string& ckpt, const std::string& data_dir,
               double sigma_proc, double sigma_obs, double sigma_g,
               int n_particles, int n_smooth, double tau_ess, int segment_start,
               int segment_len, std::uint64_t seed, const std::string& out_stem) {
  const Checkpoint ck = load_checkpoint(ckpt);
  const TrajectoryBundle bundle =
      load_bundle((fs::path(data_dir) / "trajectory").string());
  const Mat segment = bundle.observations.middleRows(segment_start, segment_len);
  PalrnnNoise noise{sigma_proc, sigma_obs, sigma_g};
  const ParticleCloud cloud =
      rbpf_filter(ck.params, noise, segment, n_particles, tau_ess, seed);
  const auto draws =
      backward_sample(cloud, ck.params, noise, n_smooth, mix64(seed ^ 0x5E0ull));
  const LouisEstimate est = louis_observed_info(draws, ck.params, noise);
  const EntropySummary ent = filtering_code_entropy(cloud);

  save_matrix(out_stem + "_iobs", est.i_obs,
              json{{"source_hash", hash_hex(ck.hash)}, {"T", est.T}});
  save_matrix(out_stem + "_icomp", est.e_i_comp,
              json{{"source_hash", hash_hex(ck.hash)}, {"T", est.T}});
  write_rbpf_diagnostics_csv(out_stem + "_diagnostics.csv", cloud);

  json summary{{"log_evidence", cloud.log_evidence()},
               {"H_c_bits", ent.mean_bits},
               {"mir", mir(est).value},
               {"tr_iobs", est.i_obs.trace()},
               {"tr_icomp", est.e_i_comp.trace()},
               {"n_draws", est.n_draws},
               {"T", est.T},
               {"sigma_proc", sigma_proc},
               {"sigma_obs", sigma_obs},
               {"sigma_g", sigma_g}};
  std::ofstream f(out_stem + ".json");
  f << summary.dump(2) << "\n";
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int toy_louis_cmd(const std::string& config_path, const std::string& out_csv) {
  const json cfg = load_json(config_path);
  ToySweepConfig sc;
  sc.a0 = cfg.value("a0", 0.90);
  sc.a1 = cfg.value("a1", 0.60);
  sc.sigma = cfg.value("sigma", 0.15);
  sc.T = cfg.value("T", 600);
  sc.n_seeds = cfg.value("n_seeds", 20);
  sc.n_sigma_g = cfg.value("n_sigma_g", 25);
  sc.sigma_g_min = cfg.value("sigma_g_min", 0.03);
  sc.sigma_g_max = cfg.value("sigma_g_max", 0.9);
  sc.seed = cfg.value("seed", 0ull);
  write_toy_csv(out_csv, toy_experiment(sc));
  std::cout << "wrote " << out_csv << "\n";
  return 0;
}

int saem_cmd(const std::string& ckpt, const std::string& config_path,
             const std::string& data_dir, const std::string& out_dir) {
  const json cfg = load_json(config_path);
  const Checkpoint ck = load_checkpoint(ckpt);
  fs::create_directories(out_dir);

  std::vector<Mat> sequences;
  for (int i = 0;; ++i) {
    const fs::path stem = fs::path(data_dir) / ("seq" + std::to_string(i));
    if (!fs::exists(stem.string() + ".json")) break;
    sequences.push_back(load_bundle(stem.string()).observations);
  }
  if (sequences.empty()) throw io_error("saem: no seq*.json bundles in " + data_dir);

  SaemConfig sc;
  sc.window_len = cfg.value("window_len", 200);
  sc.iterations = cfg.value("iterations", 8);
  sc.windows_per_iter = cfg.value("windows_per_iter", 80);
  sc.ridge = cfg.value("ridge", 1e-2);
  sc.blend_alpha = cfg.value("blend_alpha", 0.25);
  sc.n_particles = cfg.value("n_particles", 256);
  sc.n_smooth = cfg.value("n_smooth", 8);
  sc.tau_ess = cfg.value("tau_ess", 0.5);
  sc.sigma_g = cfg.value("sigma_g", 0.7);
  sc.sigma_min = cfg.value("sigma_min", 1e-4);
  sc.heldout_windows = cfg.value("heldout_windows", 120);
  sc.mode = saem_mode_from_string(cfg.value("config", "full"));
  sc.seed = cfg.value("seed", 0ull);

  SaemParams init;
  init.params = ck.params;
  init.noise.sigma_proc = cfg.value("init_sigma_proc", 0.1);
  init.noise.sigma_obs = cfg.value("init_sigma_obs", 0.1);
  init.noise.sigma_g = sc.sigma_g;

  const SaemResult result = saem_run(init, sequences, sc);
  save_checkpoint((fs::path(out_dir) / "fitted").string(), result.fitted.params,
                  json{{"config", cfg},
                       {"sigma_proc", result.fitted.noise.sigma_proc},
                       {"sigma_obs", result.fitted.noise.sigma_obs}});
  write_saem_log_csv((fs::path(out_dir) / "iterations.csv").string(), result.log);

  const WindowSplit split =
      make_windows(sequences, sc.window_len, sc.heldout_windows);
  const EvidenceResult ev =
      heldout_evidence(result.fitted, sequences, split.heldout, sc.window_len,
                       sc.n_particles, sc.tau_ess, mix64(sc.seed ^ 0xE71Dull));
  json out{{"config", to_string(sc.mode)},
           {"heldout_evidence", ev.mean},
           {"n_heldout", ev.per_window.size()},
           {"sigma_proc", result.fitted.noise.sigma_proc},
           {"sigma_obs", result.fitted.noise.sigma_obs}};
  std::ofstream f(fs::path(out_dir) / "evidence.json");
  f << out.dump(2) << "\n";
  std::cout << out.dump(2) << "\n";
  return 0;
}

int eval_qoi(const std::string& ckpt, const std::string& ref_dir, int length,
             int burn_in, const std::string& out_csv) {
  const Checkpoint ck = load_checkpoint(ckpt);
  const TrajectoryBundle reference =
      load_bundle((fs::path(ref_dir) / "trajectory").string());
  QoiConfig qc;
  qc.rollout_len = length;
  qc.burn_in = burn_in;
  const QoiReport rep = qoi_eval(ck.params, reference, qc);
  std::ofstream f(out_csv);
  f << "ckpt,d_stsp,lambda1,lambda1_error,diverged\n";
  f << hash_hex(ck.hash) << "," << format_double(rep.d_stsp) << ","
    << format_double(rep.lambda1) << "," << format_double(rep.lambda1_error)
    << "," << (rep.diverged ? 1 : 0) << "\n";
  std::cout << "d_stsp=" << rep.d_stsp << " lambda1=" << rep.lambda1
            << " err=" << rep.lambda1_error << "\n";
  return 0;
}

int mismatch_cmd(const std::string& itf_stem, const std::string& obs_stem, int T,
                 double epsilon, int k, const std::string& out_json) {
  const CurvatureMatrix itf = load_matrix(itf_stem);
  const CurvatureMatrix obs = load_matrix(obs_stem);
  const MismatchReport rep =
      matrix_diagnostics(itf, obs, T, epsilon, std::min(k, itf.p()));
  json out{{"g_Q", rep.g_q},
           {"delta_logdet", rep.delta_logdet},
           {"ov_k", rep.ov_k},
           {"k", rep.k},
           {"mu", rep.mu}};
  for (const auto& [alpha, q] : rep.gamma_quantiles) {
    char key[16];
    std::snprintf(key, sizeof(key), "%g", alpha);
    out["q_gamma"][key] = q;
  }
  std::ofstream f(out_json);
  f << out.dump(2) << "\n";
  std::cout << out.dump(2) << "\n";
  return 0;
}

int analyze_cmd(const std::string& in_csv, const std::string& xcol,
                const std::string& ycol, const std::string& ccol,
                const std::string& out_json) {
  std::ifstream f(in_csv);
  if (!f) throw io_error("analyze: cannot open " + in_csv);
  std::string header;
  std::getline(f, header);
  std::vector<std::string> cols;
  std::size_t pos = 0;
  while (true) {
    const auto comma = header.find(',', pos);
    cols.push_back(header.substr(pos, comma - pos));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  auto col_index = [&](const std::string& name) {
    for (std::size_t i = 0; i < cols.size(); ++i)
      if (cols[i] == name) return static_cast<int>(i);
    throw config_error("analyze: no column named '" + name + "'");
  };
  const int xi = col_index(xcol), yi = col_index(ycol);
  const int ci = ccol.empty() ? -1 : col_index(ccol);

  std::vector<double> xs, ys, cs;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    pos = 0;
    while (true) {
      const auto comma = line.find(',', pos);
      cells.push_back(line.substr(pos, comma - pos));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    xs.push_back(std::stod(cells[static_cast<std::size_t>(xi)]));
    ys.push_back(std::stod(cells[static_cast<std::size_t>(yi)]));
    if (ci >= 0) cs.push_back(std::stod(cells[static_cast<std::size_t>(ci)]));
  }
  const RankAssociation ra = rank_association(xs, ys, cs);
  json out{{"n", ra.n},
           {"spearman_r", ra.spearman_r},
           {"p_value", ra.p_value},
           {"partial_r", ra.partial_r},
           {"ci95", {ra.ci_lo, ra.ci_hi}}};
  std::ofstream of(out_json);
  of << out.dump(2) << "\n";
  std::cout << out.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"switching-surrogate optimization geometry toolkit"};
  app.require_subcommand(1);

  std::string config_path, data_dir, out_path, ckpt, ref_dir, itf_stem, obs_stem;
  std::string xcol = "H_c", ycol = "g_Q", ccol;
  int tau = 16, segment_start = 0, segment_len = 200, n_particles = 64,
      n_smooth = 8, length = 10000, burn_in = 1000, T = 200, k = 50;
  double sigma_obs = 0.1, sigma_proc = 0.1, sigma_g = 0.1, tau_ess = 0.5,
         epsilon = 1e-6;
  std::uint64_t seed = 0;

  auto* c_gen = app.add_subcommand("gen-data", "generate Lorenz-63 datasets");
  c_gen->add_option("--config", config_path)->required();
  c_gen->add_option("--out", out_path)->required();

  auto* c_train = app.add_subcommand("train-itf", "train an AL-RNN with ITF");
  c_train->add_option("--config", config_path)->required();
  c_train->add_option("--data", data_dir)->required();
  c_train->add_option("--out", out_path)->required();

  auto* c_fisher = app.add_subcommand("fisher-itf", "closed-form ITF Fisher");
  c_fisher->add_option("--ckpt", ckpt)->required();
  c_fisher->add_option("--data", data_dir)->required();
  c_fisher->add_option("--tau", tau);
  c_fisher->add_option("--sigma-obs", sigma_obs);
  c_fisher->add_option("--segment-start", segment_start);
  c_fisher->add_option("--segment-len", segment_len);
  c_fisher->add_option("--out", out_path)->required();

  auto* c_louis = app.add_subcommand("rbpf-louis", "RBPF/Louis observed information");
  c_louis->add_option("--ckpt", ckpt)->required();
  c_louis->add_option("--data", data_dir)->required();
  c_louis->add_option("--sigma-proc", sigma_proc);
  c_louis->add_option("--sigma-obs", sigma_obs);
  c_louis->add_option("--sigma-g", sigma_g);
  c_louis->add_option("--particles", n_particles);
  c_louis->add_option("--draws", n_smooth);
  c_louis->add_option("--tau-ess", tau_ess);
  c_louis->add_option("--segment-start", segment_start);
  c_louis->add_option("--segment-len", segment_len);
  c_louis->add_option("--seed", seed);
  c_louis->add_option("--out", out_path)->required();

  auto* c_toy = app.add_subcommand("toy-louis", "switching AR(1) Louis sweep");
  c_toy->add_option("--config", config_path)->required();
  c_toy->add_option("--out", out_path)->required();

  auto* c_saem = app.add_subcommand("saem", "particle-SAEM fine-tuning");
  c_saem->add_option("--ckpt", ckpt)->required();
  c_saem->add_option("--config", config_path)->required();
  c_saem->add_option("--data", data_dir)->required();
  c_saem->add_option("--out", out_path)->required();

  auto* c_qoi = app.add_subcommand("eval-qoi", "hard-gated rollout QoIs");
  c_qoi->add_option("--ckpt", ckpt)->required();
  c_qoi->add_option("--ref", ref_dir)->required();
  c_qoi->add_option("--length", length);
  c_qoi->add_option("--burn-in", burn_in);
  c_qoi->add_option("--out", out_path)->required();

  auto* c_mm = app.add_subcommand("mismatch", "matrix-aware mismatch diagnostics");
  c_mm->add_option("--itf", itf_stem)->required();
  c_mm->add_option("--obs", obs_stem)->required();
  c_mm->add_option("--T", T)->required();
  c_mm->add_option("--epsilon", epsilon);
  c_mm->add_option("--k", k);
  c_mm->add_option("--out", out_path)->required();

  auto* c_an = app.add_subcommand("analyze", "rank association with bootstrap CI");
  c_an->add_option("--in", config_path)->required();
  c_an->add_option("--x", xcol);
  c_an->add_option("--y", ycol);
  c_an->add_option("--covariate", ccol);
  c_an->add_option("--out", out_path)->required();

  auto* c_run = app.add_subcommand("run", "run a configured experiment");
  c_run->add_option("--config", config_path)->required();
  c_run->add_option("--out", out_path)->required();

  auto* c_emit = app.add_subcommand("emit-plots", "tidy per-figure CSVs");
  c_emit->add_option("--results", out_path)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (c_gen->parsed()) return gen_data(config_path, out_path);
    if (c_train->parsed()) return train_itf(config_path, data_dir, out_path);
    if (c_fisher->parsed())
      return fisher_itf(ckpt, data_dir, tau, sigma_obs, segment_start,
                        segment_len, out_path);
    if (c_louis->parsed())
      return rbpf_louis(ckpt, data_dir, sigma_proc, sigma_obs, sigma_g,
                        n_particles, n_smooth, tau_ess, segment_start,
                        segment_len, seed, out_path);
    if (c_toy->parsed()) return toy_louis_cmd(config_path, out_path);
    if (c_saem->parsed()) return saem_cmd(ckpt, config_path, data_dir, out_path);
    if (c_qoi->parsed()) return eval_qoi(ckpt, ref_dir, length, burn_in, out_path);
    if (c_mm->parsed())
      return mismatch_cmd(itf_stem, obs_stem, T, epsilon, k, out_path);
    if (c_an->parsed()) return analyze_cmd(config_path, xcol, ycol, ccol, out_path);
    if (c_run->parsed()) return run_experiment(config_path, out_path);
    if (c_emit->parsed()) return emit_plot_data(out_path);
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const numerical_error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const io_error& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}

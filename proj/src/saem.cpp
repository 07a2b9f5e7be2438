#include "switchgeo/saem.hpp"

#include <cmath>
#include <fstream>

#include "switchgeo/parallel.hpp"
#include "switchgeo/rng.hpp"

namespace switchgeo {

SaemMode saem_mode_from_string(const std::string& s) {
  if (s == "baseline") return SaemMode::baseline;
  if (s == "calib") return SaemMode::calib;
  if (s == "full") return SaemMode::full;
  throw config_error("unknown SAEM configuration: " + s);
}

std::string to_string(SaemMode mode) {
  switch (mode) {
    case SaemMode::baseline: return "baseline";
    case SaemMode::calib: return "calib";
    default: return "full";
  }
}

void SaemConfig::validate() const {
  if (window_len < 2) throw config_error("SaemConfig: window_len must be >= 2");
  if (iterations < 0 || windows_per_iter < 1 || n_particles < 2 || n_smooth < 2)
    throw config_error("SaemConfig: invalid iteration/particle counts");
  if (ridge < 0.0) throw config_error("SaemConfig: ridge must be >= 0");
  if (blend_alpha < 0.0 || blend_alpha > 1.0)
    throw config_error("SaemConfig: blend_alpha must lie in [0, 1]");
  if (!(sigma_min > 0.0)) throw config_error("SaemConfig: sigma_min must be > 0");
  if (!(sigma_g > 0.0)) throw config_error("SaemConfig: sigma_g must be > 0");
  if (!(tau_ess > 0.0) || tau_ess > 1.0)
    throw config_error("SaemConfig: tau_ess must lie in (0, 1]");
}

WindowSplit make_windows(const std::vector<Mat>& sequences, int L,
                         int heldout_count) {
  if (L < 2) throw config_error("make_windows: L must be >= 2");
  std::vector<std::vector<WindowIndex>> per_seq(sequences.size());
  for (std::size_t s = 0; s < sequences.size(); ++s) {
    const auto T = sequences[s].rows();
    if (T < 2 * static_cast<Eigen::Index>(L))
      throw config_error("make_windows: sequence " + std::to_string(s) +
                         " shorter than 2L");
    // t_k = 1 + (k-1)L with t_k + L <= T (1-based); boundary row is t_k - 1
    for (Eigen::Index tk = 1; tk + L <= T; tk += L)
      per_seq[s].push_back({static_cast<int>(s), static_cast<int>(tk - 1)});
  }

  WindowSplit split;
  const auto n_seq = static_cast<int>(sequences.size());
  const int quota =
      heldout_count > 0 ? (heldout_count + n_seq - 1) / n_seq : 0;
  std::vector<std::size_t> heldout_from(per_seq.size(), 0);
  int remaining = heldout_count;
  for (std::size_t s = 0; s < per_seq.size() && remaining > 0; ++s) {
    const auto take = std::min<std::size_t>(
        {static_cast<std::size_t>(quota), per_seq[s].size() - 1,
         static_cast<std::size_t>(remaining)});
    heldout_from[s] = take;
    remaining -= static_cast<int>(take);
  }
  for (std::size_t s = 0; s < per_seq.size(); ++s) {
    const auto n = per_seq[s].size();
    const auto cut = n - heldout_from[s];
    for (std::size_t k = 0; k < n; ++k)
      (k < cut ? split.train : split.heldout).push_back(per_seq[s][k]);
  }
  return split;
}

Mat window_block(const Mat& sequence, const WindowIndex& w, int L) {
  return sequence.middleRows(w.start, L + 1);
}

SuffStats SuffStats::zeros(int M) {
  SuffStats s;
  s.M = M;
  s.C.assign(static_cast<std::size_t>(M), Mat::Zero(M + 2, M + 2));
  s.b.assign(static_cast<std::size_t>(M), Vec::Zero(M + 2));
  s.szz = Vec::Zero(M);
  return s;
}

void SuffStats::add(const SuffStats& other) {
  for (int i = 0; i < M; ++i) {
    C[static_cast<std::size_t>(i)] += other.C[static_cast<std::size_t>(i)];
    b[static_cast<std::size_t>(i)] += other.b[static_cast<std::size_t>(i)];
  }
  szz += other.szz;
  obs_sse += other.obs_sse;
  n_transitions += other.n_transitions;
  n_observations += other.n_observations;
  n_pairs += other.n_pairs;
}

SuffStats window_suff_stats(const std::vector<SmoothedDraw>& draws,
                            const Mat& x_window) {
  if (draws.empty()) throw config_error("window_suff_stats: draws must be nonempty");
  const int M = static_cast<int>(draws[0].states.cols());
  const int P = static_cast<int>(draws[0].codes.cols());
  const auto N = x_window.cols();
  SuffStats stats = SuffStats::zeros(M);

  for (const auto& draw : draws) {
    const auto T = draw.states.rows();
    Vec phi(M + 2);
    for (Eigen::Index t = 0; t + 1 < T; ++t) {
      const Vec z = draw.states.row(t).transpose();
      Vec g = z;
      for (int j = 0; j < P; ++j)
        if (!draw.codes(t, j)) g[M - P + j] = 0.0;
      phi.segment(1, M) = g;
      phi[M + 1] = 1.0;
      for (int i = 0; i < M; ++i) {
        phi[0] = z[i];
        const double target = draw.states(t + 1, i);
        stats.C[static_cast<std::size_t>(i)].selfadjointView<Eigen::Lower>().rankUpdate(phi, 1.0);
        stats.b[static_cast<std::size_t>(i)] += target * phi;
        stats.szz[i] += target * target;
      }
    }
    stats.n_transitions += static_cast<long long>(T - 1);
    // scored observations: x_{t_k+1 .. t_k+L} against smoothed states
    for (Eigen::Index t = 1; t < T; ++t)
      stats.obs_sse +=
          (x_window.row(t).transpose() - draw.states.row(t).head(N).transpose())
              .squaredNorm();
    stats.n_observations += static_cast<long long>(T - 1);
    stats.n_pairs += 1.0;
  }
  for (int i = 0; i < M; ++i)
    stats.C[static_cast<std::size_t>(i)] =
        stats.C[static_cast<std::size_t>(i)].selfadjointView<Eigen::Lower>();
  return stats;
}

SaemParams m_step(const SuffStats& stats, const SaemParams& current,
                  const SaemConfig& config) {
  if (stats.n_pairs <= 0.0) throw config_error("m_step: empty statistics");
  const int M = stats.M;
  const double inv_pairs = 1.0 / stats.n_pairs;
  SaemParams prov = current;

  if (config.mode == SaemMode::full) {
    for (int i = 0; i < M; ++i) {
      Mat A = stats.C[static_cast<std::size_t>(i)] * inv_pairs;
      A.diagonal().array() += config.ridge;
      const Vec rhs = stats.b[static_cast<std::size_t>(i)] * inv_pairs;
      Eigen::LDLT<Mat> ldlt(A);
      const Vec piv = ldlt.vectorD();
      if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
          piv.minCoeff() <= 1e-12 * piv.maxCoeff())
        throw numerical_error("m_step: singular normal equations at row " +
                              std::to_string(i));
      const Vec w = ldlt.solve(rhs);
      prov.params.a[i] = w[0];
      prov.params.W.row(i) = w.segment(1, M).transpose();
      prov.params.h[i] = w[M + 1];
    }
  }

  // residual variances at the drift the configuration keeps / produces
  const auto row_coeff = [&](const AlrnnParams& p, int i) {
    Vec w(M + 2);
    w[0] = p.a[i];
    w.segment(1, M) = p.W.row(i).transpose();
    w[M + 1] = p.h[i];
    return w;
  };
  const AlrnnParams& drift = config.mode == SaemMode::full ? prov.params
                                                           : current.params;
  double sse = 0.0;
  for (int i = 0; i < M; ++i) {
    const Vec w = row_coeff(drift, i);
    sse += stats.szz[i] - 2.0 * w.dot(stats.b[static_cast<std::size_t>(i)]) +
           w.dot(stats.C[static_cast<std::size_t>(i)] * w);
  }
  sse = std::max(sse, 0.0);  // moment form cancels catastrophically near zero
  const double denom_proc =
      static_cast<double>(stats.n_transitions) * static_cast<double>(M);
  const double var_proc =
      std::max(sse / denom_proc, config.sigma_min * config.sigma_min);
  prov.noise.sigma_proc = std::sqrt(var_proc);

  const auto N = current.params.N();
  const double denom_obs =
      static_cast<double>(stats.n_observations) * static_cast<double>(N);
  const double var_obs =
      std::max(stats.obs_sse / denom_obs, config.sigma_min * config.sigma_min);
  prov.noise.sigma_obs = std::sqrt(var_obs);
  prov.noise.sigma_g = current.noise.sigma_g;  // never updated
  return prov;
}

SaemParams blend(const SaemParams& current, const SaemParams& provisional,
                 double alpha_m, SaemMode mode) {
  SaemParams out = current;
  if (mode == SaemMode::baseline) return out;
  out.noise.sigma_proc = (1.0 - alpha_m) * current.noise.sigma_proc +
                         alpha_m * provisional.noise.sigma_proc;
  out.noise.sigma_obs = (1.0 - alpha_m) * current.noise.sigma_obs +
                        alpha_m * provisional.noise.sigma_obs;
  if (mode == SaemMode::full) {
    out.params.a = (1.0 - alpha_m) * current.params.a + alpha_m * provisional.params.a;
    out.params.W = (1.0 - alpha_m) * current.params.W + alpha_m * provisional.params.W;
    out.params.h = (1.0 - alpha_m) * current.params.h + alpha_m * provisional.params.h;
  }
  return out;
}

SaemResult saem_run(const SaemParams& init, const std::vector<Mat>& sequences,
                    const SaemConfig& config) {
  config.validate();
  init.params.validate();
  init.noise.validate();

  SaemResult result;
  result.fitted = init;
  if (config.mode == SaemMode::baseline) return result;  // zero iterations

  const WindowSplit split =
      make_windows(sequences, config.window_len, config.heldout_windows);
  if (split.train.empty()) throw config_error("saem_run: no training windows");

  RngStream window_rng(config.seed, "saem/windows");
  const int M = init.params.M();
  const int L = config.window_len;
  const auto N = sequences[0].cols();

  for (int r = 0; r < config.iterations; ++r) {
    std::vector<WindowIndex> batch(static_cast<std::size_t>(config.windows_per_iter));
    for (auto& w : batch)
      w = split.train[static_cast<std::size_t>(window_rng.below(split.train.size()))];

    std::vector<SuffStats> stats(batch.size());
    std::vector<double> logz(batch.size(), 0.0);
    std::vector<char> failed(batch.size(), 0);
    const SaemParams cur = result.fitted;
    par::parallel_for(batch.size(), [&](std::size_t k) {
      try {
        const Mat x_win = window_block(sequences[static_cast<std::size_t>(batch[k].seq)],
                                       batch[k], L);
        const std::uint64_t sd = mix64(
            config.seed ^ fnv1a(stream_name("saem/iter", static_cast<std::uint64_t>(r),
                                            static_cast<std::uint64_t>(k))));
        const ParticleCloud cloud = rbpf_filter(cur.params, cur.noise, x_win,
                                                config.n_particles, config.tau_ess, sd);
        const auto draws =
            backward_sample(cloud, cur.params, cur.noise, config.n_smooth, sd);
        stats[k] = window_suff_stats(draws, x_win);
        logz[k] = cloud.log_evidence();
      } catch (const numerical_error&) {
        failed[k] = 1;
        stats[k] = SuffStats::zeros(M);
      }
    });

    SuffStats agg = SuffStats::zeros(M);
    double logz_sum = 0.0;
    int n_ok = 0;
    for (std::size_t k = 0; k < batch.size(); ++k) {
      if (failed[k]) continue;
      agg.add(stats[k]);
      logz_sum += logz[k];
      ++n_ok;
    }
    if (n_ok == 0)
      throw numerical_error("saem_run: every window failed at iteration " +
                            std::to_string(r));

    const SaemParams prov = m_step(agg, result.fitted, config);
    result.fitted = blend(result.fitted, prov, config.blend_alpha, config.mode);

    SaemIterLog lg;
    lg.iter = r;
    lg.mean_train_logz_per_step_dim =
        logz_sum / (static_cast<double>(n_ok) * L * static_cast<double>(N));
    lg.sigma_proc = result.fitted.noise.sigma_proc;
    lg.sigma_obs = result.fitted.noise.sigma_obs;
    lg.failed_windows = static_cast<int>(batch.size()) - n_ok;
    result.log.push_back(lg);
  }
  return result;
}

EvidenceResult heldout_evidence(const SaemParams& model,
                                const std::vector<Mat>& sequences,
                                const std::vector<WindowIndex>& heldout, int L,
                                int n_particles, double tau_ess,
                                std::uint64_t seed) {
  if (heldout.empty()) throw config_error("heldout_evidence: empty held-out set");
  const auto N = sequences[0].cols();
  std::vector<double> per(heldout.size());
  par::parallel_for(heldout.size(), [&](std::size_t k) {
    const Mat x_win =
        window_block(sequences[static_cast<std::size_t>(heldout[k].seq)], heldout[k], L);
    const std::uint64_t sd = mix64(
        seed ^ fnv1a(stream_name("evidence", static_cast<std::uint64_t>(heldout[k].seq),
                                 static_cast<std::uint64_t>(heldout[k].start))));
    const ParticleCloud cloud =
        rbpf_filter(model.params, model.noise, x_win, n_particles, tau_ess, sd);
    per[k] = cloud.log_evidence() / (static_cast<double>(L) * static_cast<double>(N));
  });
  EvidenceResult out;
  out.per_window = per;
  out.mean = mean_of(per);
  return out;
}

void write_saem_log_csv(const std::string& path,
                        const std::vector<SaemIterLog>& log) {
  std::ofstream f(path);
  if (!f) throw io_error("write_saem_log_csv: cannot open " + path);
  f << "iter,mean_train_logz_per_step_dim,sigma_proc,sigma_obs,failed_windows\n";
  for (const auto& e : log)
    f << e.iter << "," << format_double(e.mean_train_logz_per_step_dim) << ","
      << format_double(e.sigma_proc) << "," << format_double(e.sigma_obs) << ","
      << e.failed_windows << "\n";
}

}  // namespace switchgeo

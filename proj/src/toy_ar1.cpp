#include "switchgeo/toy_ar1.hpp"

#include <cmath>
#include <fstream>

#include "switchgeo/parallel.hpp"
#include "switchgeo/rng.hpp"

namespace switchgeo {

Vec simulate_toy(const ToyModel& model, int T, std::uint64_t seed) {
  model.validate();
  if (T < 2) throw config_error("simulate_toy: T must be >= 2");
  RngStream rng(seed, "toy/sim");
  Vec x(T);
  x[0] = 0.0;
  for (int t = 0; t + 1 < T; ++t) {
    const double pi_t = norm_cdf(x[t] / model.sigma_g);
    const double a = rng.uniform() < pi_t ? model.a1 : model.a0;
    x[t + 1] = a * x[t] + model.sigma * rng.normal();
  }
  return x;
}

double toy_gate_posterior(double x_t, double x_next, const ToyModel& model) {
  const double pi_t = norm_cdf(x_t / model.sigma_g);
  const double v = model.sigma * model.sigma;
  if (pi_t <= 0.0) return 0.0;
  if (pi_t >= 1.0) return 1.0;
  const double l1 = std::log(pi_t) + log_norm_pdf(x_next, model.a1 * x_t, v);
  const double l0 = std::log(1.0 - pi_t) + log_norm_pdf(x_next, model.a0 * x_t, v);
  return 1.0 / (1.0 + std::exp(l0 - l1));
}

namespace {

double bernoulli_entropy_bits(double p) {
  double H = 0.0;
  if (p > 0.0) H -= p * std::log2(p);
  if (p < 1.0) H -= (1.0 - p) * std::log2(1.0 - p);
  return H;
}

}  // namespace

ToyLouis toy_louis(const Vec& x, const ToyModel& model) {
  model.validate();
  const auto T = x.size();
  if (T < 2) throw config_error("toy_louis: series length must be >= 2");
  const double inv_v = 1.0 / (model.sigma * model.sigma);

  ToyLouis out;
  out.i_obs.setZero();
  out.e_i_comp.setZero();
  out.i_miss.setZero();
  double entropy = 0.0;
  for (Eigen::Index t = 0; t + 1 < T; ++t) {
    const double p = toy_gate_posterior(x[t], x[t + 1], model);
    const double xx = x[t] * x[t] * inv_v;
    // per-regime score and information over (a0, a1)
    Eigen::Vector2d s0(( x[t + 1] - model.a0 * x[t]) * x[t] * inv_v, 0.0);
    Eigen::Vector2d s1(0.0, (x[t + 1] - model.a1 * x[t]) * x[t] * inv_v);
    Eigen::Matrix2d comp = Eigen::Matrix2d::Zero();
    comp(0, 0) = (1.0 - p) * xx;
    comp(1, 1) = p * xx;
    const Eigen::Vector2d ds = s1 - s0;
    const Eigen::Matrix2d miss = p * (1.0 - p) * (ds * ds.transpose());
    out.e_i_comp += comp;
    out.i_miss += miss;
    out.i_obs += comp - miss;
    entropy += bernoulli_entropy_bits(p);
  }
  out.mean_entropy_bits = entropy / static_cast<double>(T - 1);
  out.mir = 1.0 - out.i_obs.trace() / out.e_i_comp.trace();
  return out;
}

ToySweepResult toy_experiment(const ToySweepConfig& config) {
  if (config.n_sigma_g < 2 || config.n_seeds < 1 || config.T < 2)
    throw config_error("toy_experiment: invalid sweep configuration");

  ToySweepResult result;
  result.sigma_g_grid.resize(static_cast<std::size_t>(config.n_sigma_g));
  const double lmin = std::log(config.sigma_g_min);
  const double lmax = std::log(config.sigma_g_max);
  for (int g = 0; g < config.n_sigma_g; ++g)
    result.sigma_g_grid[static_cast<std::size_t>(g)] =
        std::exp(lmin + (lmax - lmin) * g / (config.n_sigma_g - 1));

  const auto n_rows =
      static_cast<std::size_t>(config.n_sigma_g) * static_cast<std::size_t>(config.n_seeds);
  result.rows.resize(n_rows);
  par::parallel_for(n_rows, [&](std::size_t r) {
    const int g = static_cast<int>(r) / config.n_seeds;
    const int s = static_cast<int>(r) % config.n_seeds;
    ToyModel model{config.a0, config.a1, config.sigma,
                   result.sigma_g_grid[static_cast<std::size_t>(g)]};
    const std::uint64_t seed =
        mix64(config.seed ^ fnv1a(stream_name("toy", static_cast<std::uint64_t>(g),
                                              static_cast<std::uint64_t>(s))));
    const Vec x = simulate_toy(model, config.T, seed);
    const ToyLouis tl = toy_louis(x, model);
    result.rows[r] = {model.sigma_g, s, tl.mean_entropy_bits, tl.mir,
                      std::log10(tl.i_obs.trace())};
  });

  result.summary.resize(static_cast<std::size_t>(config.n_sigma_g));
  for (int g = 0; g < config.n_sigma_g; ++g) {
    std::vector<double> ent, mir_v, ltr;
    for (int s = 0; s < config.n_seeds; ++s) {
      const auto& row =
          result.rows[static_cast<std::size_t>(g) * config.n_seeds + s];
      ent.push_back(row.mean_entropy_bits);
      mir_v.push_back(row.mir);
      ltr.push_back(row.log10_tr_iobs);
    }
    const double nsq = std::sqrt(static_cast<double>(config.n_seeds));
    ToySummaryRow sr;
    sr.sigma_g = result.sigma_g_grid[static_cast<std::size_t>(g)];
    sr.mean_entropy_bits = mean_of(ent);
    sr.mean_mir = mean_of(mir_v);
    sr.mean_log10_tr = mean_of(ltr);
    if (config.n_seeds > 1) {
      sr.sem_entropy_bits = sample_std(ent) / nsq;
      sr.sem_mir = sample_std(mir_v) / nsq;
      sr.sem_log10_tr = sample_std(ltr) / nsq;
    } else {
      sr.sem_entropy_bits = sr.sem_mir = sr.sem_log10_tr = 0.0;
    }
    result.summary[static_cast<std::size_t>(g)] = sr;
  }
  return result;
}

void write_toy_csv(const std::string& path, const ToySweepResult& result) {
  std::ofstream f(path);
  if (!f) throw io_error("write_toy_csv: cannot open " + path);
  f << "sigma_g,seed,mean_entropy_bits,mir,log10_tr_iobs\n";
  for (const auto& r : result.rows)
    f << format_double(r.sigma_g) << "," << r.seed << ","
      << format_double(r.mean_entropy_bits) << "," << format_double(r.mir) << ","
      << format_double(r.log10_tr_iobs) << "\n";
}

}  // namespace switchgeo

#include "switchgeo/trajectory.hpp"

#include <cmath>
#include <fstream>

#include "switchgeo/parallel.hpp"
#include "switchgeo/rng.hpp"

namespace switchgeo {

using nlohmann::json;

Standardizer Standardizer::identity(int n) {
  Standardizer s;
  s.mean = Vec::Zero(n);
  s.std = Vec::Ones(n);
  return s;
}

Standardizer Standardizer::fit(const Mat& data) {
  Standardizer s;
  const auto T = static_cast<double>(data.rows());
  s.mean = data.colwise().mean();
  s.std = ((data.rowwise() - s.mean.transpose()).array().square().colwise().sum() / T)
              .sqrt()
              .matrix();
  return s;
}

Mat Standardizer::apply(const Mat& data) const {
  return (data.rowwise() - mean.transpose()).array().rowwise() /
         std.transpose().array();
}

Mat Standardizer::invert(const Mat& data) const {
  return (data.array().rowwise() * std.transpose().array()).matrix().rowwise() +
         mean.transpose();
}

namespace {

Mat per_coordinate_noise(int T, int N, RngStream& rng) {
  Mat eta(T, N);
  for (int t = 0; t < T; ++t)
    for (int j = 0; j < N; ++j) eta(t, j) = rng.normal();
  return eta;
}

Vec column_std(const Mat& data) {
  const auto T = static_cast<double>(data.rows());
  const Vec mean = data.colwise().mean();
  return ((data.rowwise() - mean.transpose()).array().square().colwise().sum() / T)
      .sqrt()
      .matrix();
}

}  // namespace

TrajectoryBundle simulate_lorenz(const Eigen::Vector3d& z0, int T,
                                 const LorenzParams& params,
                                 const NoiseSpec& noise) {
  params.validate();
  noise.validate();
  if (T < 2) throw config_error("simulate_lorenz: T must be >= 2");

  const int N = 3;
  TrajectoryBundle out;
  out.meta = json{{"kind", "lorenz63"},
                  {"sigma", params.sigma},
                  {"rho", params.rho},
                  {"beta", params.beta},
                  {"dt", params.dt},
                  {"sigma_proc", noise.sigma_proc},
                  {"seed", noise.seed},
                  {"z0", {z0[0], z0[1], z0[2]}}};

  auto integrate = [&](const Vec* s_ref, RngStream* rng) {
    Mat states(T, N);
    Eigen::Vector3d z = z0;
    states.row(0) = z.transpose();
    const double amp = noise.sigma_proc * std::sqrt(params.dt);
    for (int t = 1; t < T; ++t) {
      z = lorenz_step_rk4(z, params);
      if (s_ref != nullptr) {
        for (int j = 0; j < N; ++j) z[j] += amp * (*s_ref)[j] * rng->normal();
      }
      if (!z.allFinite())
        throw numerical_error("simulate_lorenz: non-finite state at step " +
                              std::to_string(t));
      states.row(t) = z.transpose();
    }
    return states;
  };

  if (noise.sigma_proc > 0.0) {
    // deterministic companion of equal length fixes the diffusion scale
    const Mat reference = integrate(nullptr, nullptr);
    const Vec s_ref = column_std(reference);
    RngStream rng(noise.seed, "lorenz/proc");
    out.states = integrate(&s_ref, &rng);
    out.meta["s_ref"] = {s_ref[0], s_ref[1], s_ref[2]};
  } else {
    out.states = integrate(nullptr, nullptr);
  }

  out.observations = out.states;
  out.standardizer = Standardizer::identity(N);
  out.frame = Frame::raw;
  return out;
}

TrajectoryBundle add_observation_noise(const TrajectoryBundle& bundle,
                                       const NoiseSpec& noise) {
  noise.validate();
  if (bundle.frame != Frame::raw)
    throw config_error("add_observation_noise: bundle must be in the raw frame");

  TrajectoryBundle out = bundle;
  const Vec s_train = column_std(bundle.states);
  RngStream rng(noise.seed, "lorenz/obs");
  const Mat eta = per_coordinate_noise(static_cast<int>(bundle.T()),
                                       static_cast<int>(bundle.dim()), rng);
  out.observations =
      bundle.states +
      noise.sigma_obs * (eta.array().rowwise() * s_train.transpose().array()).matrix();
  out.meta["sigma_obs"] = noise.sigma_obs;
  out.meta["obs_seed"] = noise.seed;
  out.meta["s_train"] = std::vector<double>(s_train.data(), s_train.data() + s_train.size());
  return out;
}

TrajectoryBundle standardize(const TrajectoryBundle& bundle) {
  if (bundle.frame != Frame::raw)
    throw config_error("standardize: bundle already standardized");
  const Standardizer s = Standardizer::fit(bundle.observations);
  for (Eigen::Index j = 0; j < s.std.size(); ++j)
    if (!(s.std[j] > 0.0))
      throw numerical_error("standardize: zero-variance dimension " +
                            std::to_string(j));
  TrajectoryBundle out = bundle;
  out.states = s.apply(bundle.states);
  out.observations = s.apply(bundle.observations);
  out.standardizer = s;
  out.frame = Frame::standardized;
  return out;
}

TrajectoryBundle unstandardize(const TrajectoryBundle& bundle) {
  if (bundle.frame != Frame::standardized)
    throw config_error("unstandardize: bundle is not standardized");
  TrajectoryBundle out = bundle;
  out.states = bundle.standardizer.invert(bundle.states);
  out.observations = bundle.standardizer.invert(bundle.observations);
  out.standardizer = Standardizer::identity(static_cast<int>(bundle.dim()));
  out.frame = Frame::raw;
  return out;
}

std::vector<TrajectoryBundle> make_saem_dataset(const SaemDataConfig& config) {
  if (config.T <= config.burn_in)
    throw config_error("make_saem_dataset: T must exceed the burn-in");
  if (config.n_seq < 1) throw config_error("make_saem_dataset: n_seq must be >= 1");

  const int keep = config.T - config.burn_in;
  std::vector<TrajectoryBundle> raw(config.n_seq);
  par::parallel_for(static_cast<std::size_t>(config.n_seq), [&](std::size_t i) {
    RngStream init_rng(config.seed, stream_name("saem-data/z0", i));
    Eigen::Vector3d z0(1.0, 1.0, 1.0);
    for (int j = 0; j < 3; ++j) z0[j] += init_rng.uniform(-0.5, 0.5);
    NoiseSpec proc{config.sigma_proc, 0.0,
                   mix64(config.seed ^ (0x51ED0ull + i))};
    TrajectoryBundle full = simulate_lorenz(z0, config.T, config.params, proc);
    TrajectoryBundle trimmed;
    trimmed.states = full.states.bottomRows(keep);
    trimmed.observations = trimmed.states;
    trimmed.standardizer = Standardizer::identity(3);
    trimmed.frame = Frame::raw;
    trimmed.meta = full.meta;
    trimmed.meta["burn_in"] = config.burn_in;
    trimmed.meta["sequence"] = i;
    raw[i] = std::move(trimmed);
  });

  // pooled training std of the states sets the observation-noise scale
  Mat pooled_states(static_cast<Eigen::Index>(config.n_seq) * keep, 3);
  for (int i = 0; i < config.n_seq; ++i)
    pooled_states.middleRows(static_cast<Eigen::Index>(i) * keep, keep) =
        raw[i].states;
  const Vec s_train = column_std(pooled_states);

  Mat pooled_obs(pooled_states.rows(), 3);
  for (int i = 0; i < config.n_seq; ++i) {
    RngStream rng(config.seed, stream_name("saem-data/obs", i));
    const Mat eta = per_coordinate_noise(keep, 3, rng);
    raw[i].observations =
        raw[i].states +
        config.sigma_obs *
            (eta.array().rowwise() * s_train.transpose().array()).matrix();
    raw[i].meta["sigma_obs"] = config.sigma_obs;
    pooled_obs.middleRows(static_cast<Eigen::Index>(i) * keep, keep) =
        raw[i].observations;
  }

  // standardizer pooled over all sequences and time indices
  Standardizer pooled = Standardizer::fit(pooled_obs);
  for (Eigen::Index j = 0; j < 3; ++j)
    if (!(pooled.std[j] > 0.0))
      throw numerical_error("make_saem_dataset: zero-variance dimension");

  for (auto& b : raw) {
    b.states = pooled.apply(b.states);
    b.observations = pooled.apply(b.observations);
    b.standardizer = pooled;
    b.frame = Frame::standardized;
    b.meta["s_train"] =
        std::vector<double>(s_train.data(), s_train.data() + s_train.size());
  }
  return raw;
}

namespace {

void write_blob(std::ofstream& f, const Mat& m) {
  // row-major on disk
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    f.write(reinterpret_cast<const char*>(m.row(r).eval().data()),
            static_cast<std::streamsize>(sizeof(double)) * m.cols());
}

Mat read_blob(std::ifstream& f, Eigen::Index rows, Eigen::Index cols) {
  Mat m(rows, cols);
  std::vector<double> row(static_cast<std::size_t>(cols));
  for (Eigen::Index r = 0; r < rows; ++r) {
    f.read(reinterpret_cast<char*>(row.data()),
           static_cast<std::streamsize>(sizeof(double)) * cols);
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)];
  }
  return m;
}

}  // namespace

void save_bundle(const std::string& stem, const TrajectoryBundle& bundle) {
  std::ofstream bin(stem + ".bin", std::ios::binary);
  if (!bin) throw io_error("save_bundle: cannot open " + stem + ".bin");
  write_blob(bin, bundle.states);
  write_blob(bin, bundle.observations);
  bin.close();

  json side{{"T", bundle.T()},
            {"N", bundle.dim()},
            {"frame", bundle.frame == Frame::raw ? "raw" : "standardized"},
            {"layout", {"states", "observations"}},
            {"standardizer",
             {{"mean", std::vector<double>(bundle.standardizer.mean.data(),
                                           bundle.standardizer.mean.data() +
                                               bundle.standardizer.mean.size())},
              {"std", std::vector<double>(bundle.standardizer.std.data(),
                                          bundle.standardizer.std.data() +
                                              bundle.standardizer.std.size())}}},
            {"meta", bundle.meta}};
  std::ofstream js(stem + ".json");
  if (!js) throw io_error("save_bundle: cannot open " + stem + ".json");
  js << side.dump(2) << "\n";
}

TrajectoryBundle load_bundle(const std::string& stem) {
  std::ifstream js(stem + ".json");
  if (!js) throw io_error("load_bundle: missing " + stem + ".json");
  json side = json::parse(js);

  TrajectoryBundle b;
  const auto T = side.at("T").get<Eigen::Index>();
  const auto N = side.at("N").get<Eigen::Index>();
  b.frame = side.at("frame").get<std::string>() == "raw" ? Frame::raw
                                                         : Frame::standardized;
  const auto mean = side.at("standardizer").at("mean").get<std::vector<double>>();
  const auto std_ = side.at("standardizer").at("std").get<std::vector<double>>();
  b.standardizer.mean = Eigen::Map<const Vec>(mean.data(), static_cast<Eigen::Index>(mean.size()));
  b.standardizer.std = Eigen::Map<const Vec>(std_.data(), static_cast<Eigen::Index>(std_.size()));
  b.meta = side.value("meta", json::object());

  std::ifstream bin(stem + ".bin", std::ios::binary);
  if (!bin) throw io_error("load_bundle: missing " + stem + ".bin");
  b.states = read_blob(bin, T, N);
  b.observations = read_blob(bin, T, N);
  return b;
}

void export_bundle_csv(const std::string& path, const TrajectoryBundle& bundle) {
  std::ofstream f(path);
  if (!f) throw io_error("export_bundle_csv: cannot open " + path);
  const auto N = bundle.dim();
  f << "t";
  for (Eigen::Index j = 0; j < N; ++j) f << ",state" << j;
  for (Eigen::Index j = 0; j < N; ++j) f << ",obs" << j;
  f << "\n";
  for (Eigen::Index t = 0; t < bundle.T(); ++t) {
    f << t;
    for (Eigen::Index j = 0; j < N; ++j) f << "," << format_double(bundle.states(t, j));
    for (Eigen::Index j = 0; j < N; ++j)
      f << "," << format_double(bundle.observations(t, j));
    f << "\n";
  }
}

}  // namespace switchgeo

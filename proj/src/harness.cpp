#include "switchgeo/harness.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>

#include "switchgeo/louis.hpp"
#include "switchgeo/metrics.hpp"
#include "switchgeo/parallel.hpp"
#include "switchgeo/rng.hpp"
#include "switchgeo/saem.hpp"
#include "switchgeo/toy_ar1.hpp"
#include "switchgeo/train.hpp"

namespace switchgeo {

namespace fs = std::filesystem;
using nlohmann::json;

std::string ConfigResult::error_text() const {
  std::string s;
  for (const auto& e : errors) s += e.path + ": " + e.message + "\n";
  return s;
}

namespace {

// ----- config validation ---------------------------------------------------

struct Checker {
  json& node;
  const std::string path;
  std::vector<ValidationError>& errors;
  std::vector<std::string> known;

  json& field(const std::string& key, const json& def) {
    known.push_back(key);
    if (!node.contains(key)) node[key] = def;
    return node[key];
  }

  void number(const std::string& key, double def, double lo, double hi) {
    json& v = field(key, def);
    if (!v.is_number()) {
      errors.push_back({path + "/" + key, "expected a number"});
    } else {
      const double x = v.get<double>();
      if (x < lo || x > hi)
        errors.push_back({path + "/" + key,
                          "out of range [" + format_double(lo) + ", " +
                              format_double(hi) + "]"});
    }
  }

  void integer(const std::string& key, long long def, long long lo,
               long long hi) {
    json& v = field(key, def);
    if (!v.is_number_integer()) {
      errors.push_back({path + "/" + key, "expected an integer"});
    } else {
      const auto x = v.get<long long>();
      if (x < lo || x > hi)
        errors.push_back({path + "/" + key,
                          "out of range [" + std::to_string(lo) + ", " +
                              std::to_string(hi) + "]"});
    }
  }

  void finish() {
    for (auto it = node.begin(); it != node.end(); ++it) {
      if (std::find(known.begin(), known.end(), it.key()) == known.end())
        errors.push_back({path + "/" + it.key(), "unknown key"});
    }
  }
};

Checker section(json& root, const std::string& key,
                std::vector<ValidationError>& errors,
                std::vector<std::string>& root_known) {
  root_known.push_back(key);
  if (!root.contains(key) || !root[key].is_object()) {
    if (root.contains(key) && !root[key].is_object())
      errors.push_back({"/" + key, "expected an object"});
    root[key] = json::object();
  }
  return Checker{root[key], "/" + key, errors, {}};
}

void validate_toy(json& root, std::vector<ValidationError>& errors,
                  std::vector<std::string>& root_known) {
  auto c = section(root, "toy", errors, root_known);
  c.number("a0", 0.90, -10.0, 10.0);
  c.number("a1", 0.60, -10.0, 10.0);
  c.number("sigma", 0.15, 1e-12, 1e6);
  c.integer("T", 600, 2, 100000000);
  c.integer("n_seeds", 20, 1, 100000);
  c.integer("n_sigma_g", 25, 2, 100000);
  c.number("sigma_g_min", 0.03, 1e-12, 1e6);
  c.number("sigma_g_max", 0.9, 1e-12, 1e6);
  c.finish();
  if (errors.empty() &&
      root["toy"]["sigma_g_min"].get<double>() >=
          root["toy"]["sigma_g_max"].get<double>())
    errors.push_back({"/toy/sigma_g_min", "must be < sigma_g_max"});
}

void validate_rbpf_section(Checker& c, double sigma_g_default, int np_default) {
  c.integer("segment_len", 200, 2, 1000000);
  c.integer("n_particles", np_default, 2, 10000000);
  c.integer("n_smooth", 8, 2, 100000);
  c.number("tau_ess", 0.5, 1e-9, 1.0);
  c.number("sigma_g", sigma_g_default, 1e-9, 1e6);
  c.finish();
}

void validate_curvature_gap(json& root, std::vector<ValidationError>& errors,
                            std::vector<std::string>& root_known) {
  {
    auto c = section(root, "data", errors, root_known);
    c.integer("T_train", 80000, 100, 100000000);
    c.integer("T_test", 20000, 300, 100000000);
    c.integer("burn_in", 1000, 0, 100000000);
    c.field("sigma_proc_grid", json::array({0.1, 0.3, 0.5}));
    c.field("sigma_obs_grid", json::array({0.1, 0.3, 0.5}));
    c.finish();
  }
  {
    auto c = section(root, "train", errors, root_known);
    c.integer("M", 30, 1, 4096);
    c.integer("P", 10, 1, 4096);
    c.field("tau_grid", json::array({4, 8, 16, 32, 64}));
    c.integer("batch_size", 16, 1, 65536);
    c.integer("bptt_len", 200, 2, 1000000);
    c.integer("epochs", 2000, 1, 1000000);
    c.integer("batches_per_epoch", 50, 1, 1000000);
    c.number("lr_start", 1e-3, 1e-12, 10.0);
    c.number("lr_end", 1e-5, 1e-12, 10.0);
    c.integer("seeds_per_setting", 4, 1, 10000);
    c.finish();
  }
  {
    auto c = section(root, "rbpf", errors, root_known);
    validate_rbpf_section(c, 0.1, 64);
  }
}

void validate_saem_misalignment(json& root, std::vector<ValidationError>& errors,
                                std::vector<std::string>& root_known) {
  {
    auto c = section(root, "dataset", errors, root_known);
    c.integer("T", 5000, 10, 100000000);
    c.integer("burn_in", 1000, 0, 100000000);
    c.number("sigma_obs", 0.085, 0.0, 1e6);
    c.integer("n_seq", 4, 1, 10000);
    c.finish();
  }
  {
    auto c = section(root, "train", errors, root_known);
    c.integer("M", 30, 1, 4096);
    c.integer("P", 10, 1, 4096);
    c.integer("tau", 16, 1, 1000000);
    c.integer("T_train", 80000, 100, 100000000);
    c.integer("batch_size", 16, 1, 65536);
    c.integer("bptt_len", 200, 2, 1000000);
    c.integer("epochs", 2000, 1, 1000000);
    c.integer("batches_per_epoch", 50, 1, 1000000);
    c.number("lr_start", 1e-3, 1e-12, 10.0);
    c.number("lr_end", 1e-5, 1e-12, 10.0);
    c.field("noise_regimes",
            json::array());  // [] = paper grid of 12 (proc x obs)
    c.finish();
  }
  {
    auto c = section(root, "saem", errors, root_known);
    c.integer("iterations", 8, 0, 100000);
    c.integer("windows_per_iter", 80, 1, 1000000);
    c.number("ridge", 1e-2, 0.0, 1e9);
    c.number("blend_alpha", 0.25, 0.0, 1.0);
    c.integer("n_particles", 256, 2, 10000000);
    c.integer("n_smooth", 8, 2, 100000);
    c.number("tau_ess", 0.5, 1e-9, 1.0);
    c.number("sigma_g", 0.7, 1e-9, 1e6);
    c.number("sigma_min", 1e-4, 1e-12, 1.0);
    c.integer("heldout_windows", 120, 1, 1000000);
    c.field("window_lens", json::array({16, 32, 64, 128, 200}));
    c.field("configs", json::array({"baseline", "calib", "full"}));
    c.number("init_sigma_proc", 0.1, 1e-9, 1e6);
    c.number("init_sigma_obs", 0.1, 1e-9, 1e6);
    c.finish();
  }
  {
    auto c = section(root, "qoi", errors, root_known);
    c.integer("rollout_len", 10000, 10, 100000000);
    c.integer("burn_in", 1000, 0, 100000000);
    c.number("lambda1_ref", 0.9056, -1e3, 1e3);
    c.finish();
  }
}

// ----- manifest ------------------------------------------------------------

struct Manifest {
  json j;
  fs::path out_dir;

  explicit Manifest(const fs::path& dir, const json& config) : out_dir(dir) {
    j["config"] = config;
    j["version"] = "switchgeo 0.1.0";
    j["threads"] = par::max_threads();
    j["outputs"] = json::array();
  }

  void record(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw io_error("manifest: missing output " + p.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(f)),
                            std::istreambuf_iterator<char>());
    j["outputs"].push_back(
        {{"path", fs::relative(p, out_dir).string()},
         {"bytes", bytes.size()},
         {"fnv64", hash_hex(fnv1a_bytes(bytes.data(), bytes.size()))}});
  }

  void finalize(double wall_s) {
    j["wall_clock_s"] = wall_s;
    std::ofstream f(out_dir / "manifest.json");
    if (!f) throw io_error("manifest: cannot write manifest.json");
    f << j.dump(2) << "\n";
  }
};

void write_schema(const fs::path& csv_path,
                  const std::vector<std::pair<std::string, std::string>>& cols) {
  json schema;
  schema["columns"] = json::array();
  for (const auto& [name, type] : cols)
    schema["columns"].push_back({{"name", name}, {"type", type}});
  std::ofstream f(csv_path.string() + ".schema.json");
  f << schema.dump(2) << "\n";
}

// ----- experiment drivers --------------------------------------------------

void run_toy_mechanism(const json& cfg, const fs::path& out, Manifest& mf) {
  const json& t = cfg.at("toy");
  ToySweepConfig sc;
  sc.a0 = t.at("a0").get<double>();
  sc.a1 = t.at("a1").get<double>();
  sc.sigma = t.at("sigma").get<double>();
  sc.T = t.at("T").get<int>();
  sc.n_seeds = t.at("n_seeds").get<int>();
  sc.n_sigma_g = t.at("n_sigma_g").get<int>();
  sc.sigma_g_min = t.at("sigma_g_min").get<double>();
  sc.sigma_g_max = t.at("sigma_g_max").get<double>();
  sc.seed = cfg.at("seed").get<std::uint64_t>();

  const ToySweepResult result = toy_experiment(sc);
  const fs::path csv = out / "toy_louis.csv";
  write_toy_csv(csv.string(), result);
  write_schema(csv, {{"sigma_g", "float64"},
                     {"seed", "int"},
                     {"mean_entropy_bits", "float64"},
                     {"mir", "float64"},
                     {"log10_tr_iobs", "float64"}});
  mf.record(csv);
  mf.record(csv.string() + ".schema.json");
}

struct FittedModel {
  AlrnnParams params;
  std::uint64_t hash = 0;
  double sigma_proc = 0.0;
  double sigma_obs = 0.0;
  int tau = 0;
  int seed_index = 0;
  Standardizer standardizer;  // of the training data
};

TrajectoryBundle make_training_bundle(double sigma_proc, double sigma_obs,
                                      int T, int burn_in, std::uint64_t seed) {
  LorenzParams lp;
  NoiseSpec proc{sigma_proc, 0.0, seed};
  TrajectoryBundle full =
      simulate_lorenz(Eigen::Vector3d(1.0, 1.0, 1.0), T + burn_in, lp, proc);
  TrajectoryBundle trimmed;
  trimmed.states = full.states.bottomRows(T);
  trimmed.observations = trimmed.states;
  trimmed.standardizer = Standardizer::identity(3);
  trimmed.frame = Frame::raw;
  trimmed.meta = full.meta;
  trimmed.meta["burn_in"] = burn_in;
  if (sigma_obs > 0.0) {
    NoiseSpec obs{0.0, sigma_obs, mix64(seed ^ 0x0B5ull)};
    trimmed = add_observation_noise(trimmed, obs);
  }
  return standardize(trimmed);
}

void run_curvature_gap(const json& cfg, const fs::path& out, Manifest& mf) {
  const json& dc = cfg.at("data");
  const json& tc = cfg.at("train");
  const json& rc = cfg.at("rbpf");
  const auto seed = cfg.at("seed").get<std::uint64_t>();

  const fs::path csv_path = out / "gap.csv";
  std::ofstream csv(csv_path);
  csv << "ckpt,tau,train_seed,sigma_proc,sigma_obs,H_c,g_Q,tr_itf,tr_obs_step,"
         "delta_logdet,q90_gamma,ov_k,mir,diverged\n";

  int model_index = 0;
  for (const auto& sp : dc.at("sigma_proc_grid")) {
    for (const auto& so : dc.at("sigma_obs_grid")) {
      for (const auto& tau_j : tc.at("tau_grid")) {
        for (int si = 0; si < tc.at("seeds_per_setting").get<int>(); ++si) {
          const double sigma_proc = sp.get<double>();
          const double sigma_obs = so.get<double>();
          const int tau = tau_j.get<int>();
          const std::uint64_t mseed = mix64(
              seed ^ fnv1a(stream_name("gap/model",
                                       static_cast<std::uint64_t>(model_index))));
          ++model_index;

          const TrajectoryBundle train_b = make_training_bundle(
              sigma_proc, sigma_obs, dc.at("T_train").get<int>(),
              dc.at("burn_in").get<int>(), mseed);
          TrainConfig train_cfg;
          train_cfg.M = tc.at("M").get<int>();
          train_cfg.P = tc.at("P").get<int>();
          train_cfg.tau = tau;
          train_cfg.batch_size = tc.at("batch_size").get<int>();
          train_cfg.bptt_len = tc.at("bptt_len").get<int>();
          train_cfg.epochs = tc.at("epochs").get<int>();
          train_cfg.batches_per_epoch = tc.at("batches_per_epoch").get<int>();
          train_cfg.lr_start = tc.at("lr_start").get<double>();
          train_cfg.lr_end = tc.at("lr_end").get<double>();
          train_cfg.seed = mix64(mseed ^ 0x7121ull);
          const TrainResult fitted = train(train_cfg, train_b);

          // test segment in the training standardizer's frame
          LorenzParams lp;
          NoiseSpec proc{sigma_proc, 0.0, mix64(mseed ^ 0x7E57ull)};
          TrajectoryBundle test_full = simulate_lorenz(
              Eigen::Vector3d(1.0, 1.0, 1.0),
              dc.at("T_test").get<int>() + dc.at("burn_in").get<int>(), lp, proc);
          TrajectoryBundle test_b;
          test_b.states = test_full.states.bottomRows(dc.at("T_test").get<int>());
          test_b.observations = test_b.states;
          test_b.standardizer = Standardizer::identity(3);
          test_b.frame = Frame::raw;
          test_b.meta = test_full.meta;
          if (sigma_obs > 0.0) {
            NoiseSpec obs{0.0, sigma_obs, mix64(mseed ^ 0x0B50ull)};
            test_b = add_observation_noise(test_b, obs);
          }
          const Mat segment =
              train_b.standardizer.apply(test_b.observations)
                  .topRows(rc.at("segment_len").get<int>());

          const CurvatureMatrix i_itf =
              itf_fisher(fitted.params, segment, tau, sigma_obs);
          PalrnnNoise noise{sigma_proc, sigma_obs, rc.at("sigma_g").get<double>()};
          const ParticleCloud cloud =
              rbpf_filter(fitted.params, noise, segment,
                          rc.at("n_particles").get<int>(),
                          rc.at("tau_ess").get<double>(), mix64(mseed ^ 0xF17Eull));
          const auto draws =
              backward_sample(cloud, fitted.params, noise,
                              rc.at("n_smooth").get<int>(), mix64(mseed ^ 0x5E0ull));
          const LouisEstimate louis =
              louis_observed_info(draws, fitted.params, noise);
          const int T_seg = static_cast<int>(segment.rows());
          const double nan = std::numeric_limits<double>::quiet_NaN();
          // the Monte Carlo observed-information estimate can be indefinite
          // at small budgets; keep the sweep going and mark the row
          double g_q = nan, dlogdet = nan, q90 = nan, ovk = nan;
          try {
            g_q = curvature_gap(i_itf, louis.i_obs, T_seg);
            const MismatchReport mm =
                matrix_diagnostics(i_itf, louis.i_obs, T_seg, 1e-6,
                                   std::min(50, i_itf.p()));
            dlogdet = mm.delta_logdet;
            q90 = mm.gamma_quantiles.at(0.9);
            ovk = mm.ov_k;
          } catch (const numerical_error&) {
          }
          const EntropySummary ent = filtering_code_entropy(cloud);

          const std::string ck =
              hash_hex(checkpoint_hash(fitted.params));
          save_checkpoint((out / ("ckpt_" + ck)).string(), fitted.params,
                          json{{"tau", tau},
                               {"sigma_proc", sigma_proc},
                               {"sigma_obs", sigma_obs},
                               {"seed", si}});
          csv << ck << "," << tau << "," << si << "," << format_double(sigma_proc)
              << "," << format_double(sigma_obs) << ","
              << format_double(ent.mean_bits) << "," << format_double(g_q) << ","
              << format_double(i_itf.trace()) << ","
              << format_double(louis.i_obs.trace() / T_seg) << ","
              << format_double(dlogdet) << "," << format_double(q90) << ","
              << format_double(ovk) << "," << format_double(mir(louis).value)
              << ",0\n";
        }
      }
    }
  }
  csv.close();
  write_schema(csv_path, {{"ckpt", "hex64"},
                          {"tau", "int"},
                          {"train_seed", "int"},
                          {"sigma_proc", "float64"},
                          {"sigma_obs", "float64"},
                          {"H_c", "float64"},
                          {"g_Q", "float64"},
                          {"tr_itf", "float64"},
                          {"tr_obs_step", "float64"},
                          {"delta_logdet", "float64"},
                          {"q90_gamma", "float64"},
                          {"ov_k", "float64"},
                          {"mir", "float64"},
                          {"diverged", "int"}});
  mf.record(csv_path);
  mf.record(csv_path.string() + ".schema.json");
}

void run_saem_misalignment(const json& cfg, const fs::path& out, Manifest& mf) {
  const json& dc = cfg.at("dataset");
  const json& tc = cfg.at("train");
  const json& sc = cfg.at("saem");
  const json& qc = cfg.at("qoi");
  const auto seed = cfg.at("seed").get<std::uint64_t>();

  SaemDataConfig data_cfg;
  data_cfg.T = dc.at("T").get<int>();
  data_cfg.burn_in = dc.at("burn_in").get<int>();
  data_cfg.sigma_obs = dc.at("sigma_obs").get<double>();
  data_cfg.n_seq = dc.at("n_seq").get<int>();
  data_cfg.seed = mix64(seed ^ 0xDA7Aull);
  const auto dataset = make_saem_dataset(data_cfg);
  std::vector<Mat> sequences;
  for (const auto& b : dataset) sequences.push_back(b.observations);

  // QoI reference trajectory (clean, raw coordinates) sharing the dataset
  // standardizer so rollouts can be mapped back
  LorenzParams lp;
  const int qoi_len = qc.at("rollout_len").get<int>();
  TrajectoryBundle ref_full = simulate_lorenz(
      Eigen::Vector3d(1.0, 1.0, 1.0), qoi_len + data_cfg.burn_in, lp, NoiseSpec{});
  TrajectoryBundle reference;
  reference.states = ref_full.states.bottomRows(qoi_len);
  reference.observations = reference.states;
  reference.standardizer = dataset[0].standardizer;
  reference.frame = Frame::raw;

  // noise regimes for the ITF-pretrained initializations
  std::vector<std::pair<double, double>> regimes;
  if (tc.at("noise_regimes").empty()) {
    for (double spn : {0.1, 0.3, 0.5})
      for (double son : {0.0, 0.1, 0.3, 0.5}) regimes.emplace_back(spn, son);
  } else {
    for (const auto& r : tc.at("noise_regimes"))
      regimes.emplace_back(r.at(0).get<double>(), r.at(1).get<double>());
  }

  const fs::path csv_path = out / "saem.csv";
  std::ofstream csv(csv_path);
  csv << "ckpt,init_sigma_proc_train,init_sigma_obs_train,L,config,evidence,"
         "d_stsp,le_error,sigma_proc,sigma_obs,diverged\n";

  int init_index = 0;
  for (const auto& [spn, son] : regimes) {
    const std::uint64_t mseed = mix64(
        seed ^ fnv1a(stream_name("saem/init",
                                 static_cast<std::uint64_t>(init_index))));
    ++init_index;
    const TrajectoryBundle train_b =
        make_training_bundle(spn, son, tc.at("T_train").get<int>(),
                             dc.at("burn_in").get<int>(), mseed);
    TrainConfig train_cfg;
    train_cfg.M = tc.at("M").get<int>();
    train_cfg.P = tc.at("P").get<int>();
    train_cfg.tau = tc.at("tau").get<int>();
    train_cfg.batch_size = tc.at("batch_size").get<int>();
    train_cfg.bptt_len = tc.at("bptt_len").get<int>();
    train_cfg.epochs = tc.at("epochs").get<int>();
    train_cfg.batches_per_epoch = tc.at("batches_per_epoch").get<int>();
    train_cfg.lr_start = tc.at("lr_start").get<double>();
    train_cfg.lr_end = tc.at("lr_end").get<double>();
    train_cfg.seed = mix64(mseed ^ 0x7121ull);
    const TrainResult fitted = train(train_cfg, train_b);
    const std::string ck = hash_hex(checkpoint_hash(fitted.params));
    save_checkpoint((out / ("init_" + ck)).string(), fitted.params,
                    json{{"sigma_proc_train", spn}, {"sigma_obs_train", son}});

    for (const auto& lj : sc.at("window_lens")) {
      const int L = lj.get<int>();
      for (const auto& cj : sc.at("configs")) {
        SaemConfig saem_cfg;
        saem_cfg.window_len = L;
        saem_cfg.iterations = sc.at("iterations").get<int>();
        saem_cfg.windows_per_iter = sc.at("windows_per_iter").get<int>();
        saem_cfg.ridge = sc.at("ridge").get<double>();
        saem_cfg.blend_alpha = sc.at("blend_alpha").get<double>();
        saem_cfg.n_particles = sc.at("n_particles").get<int>();
        saem_cfg.n_smooth = sc.at("n_smooth").get<int>();
        saem_cfg.tau_ess = sc.at("tau_ess").get<double>();
        saem_cfg.sigma_g = sc.at("sigma_g").get<double>();
        saem_cfg.sigma_min = sc.at("sigma_min").get<double>();
        saem_cfg.heldout_windows = sc.at("heldout_windows").get<int>();
        saem_cfg.mode = saem_mode_from_string(cj.get<std::string>());
        saem_cfg.seed = mix64(mseed ^ fnv1a(stream_name("saem/L", L)));

        SaemParams init;
        init.params = fitted.params;
        init.noise.sigma_proc = sc.at("init_sigma_proc").get<double>();
        init.noise.sigma_obs = sc.at("init_sigma_obs").get<double>();
        init.noise.sigma_g = saem_cfg.sigma_g;

        const SaemResult run = saem_run(init, sequences, saem_cfg);
        const WindowSplit split =
            make_windows(sequences, L, saem_cfg.heldout_windows);
        const EvidenceResult ev = heldout_evidence(
            run.fitted, sequences, split.heldout, L, saem_cfg.n_particles,
            saem_cfg.tau_ess, mix64(saem_cfg.seed ^ 0xE71Dull));

        QoiConfig qoi_cfg;
        qoi_cfg.rollout_len = qoi_len;
        qoi_cfg.burn_in = qc.at("burn_in").get<int>();
        qoi_cfg.lambda1_ref = qc.at("lambda1_ref").get<double>();
        const QoiReport qoi = qoi_eval(run.fitted.params, reference, qoi_cfg);

        csv << ck << "," << format_double(spn) << "," << format_double(son)
            << "," << L << "," << cj.get<std::string>() << ","
            << format_double(ev.mean) << "," << format_double(qoi.d_stsp) << ","
            << format_double(qoi.lambda1_error) << ","
            << format_double(run.fitted.noise.sigma_proc) << ","
            << format_double(run.fitted.noise.sigma_obs) << ","
            << (qoi.diverged ? 1 : 0) << "\n";
      }
    }
  }
  csv.close();
  write_schema(csv_path, {{"ckpt", "hex64"},
                          {"init_sigma_proc_train", "float64"},
                          {"init_sigma_obs_train", "float64"},
                          {"L", "int"},
                          {"config", "string"},
                          {"evidence", "float64"},
                          {"d_stsp", "float64"},
                          {"le_error", "float64"},
                          {"sigma_proc", "float64"},
                          {"sigma_obs", "float64"},
                          {"diverged", "int"}});
  mf.record(csv_path);
  mf.record(csv_path.string() + ".schema.json");
}

}  // namespace

ConfigResult validate_config(const json& config) {
  ConfigResult result;
  result.normalized = config;
  json& root = result.normalized;
  std::vector<std::string> root_known = {"experiment"};

  if (!root.contains("experiment") || !root["experiment"].is_string()) {
    result.errors.push_back({"/experiment", "required string field"});
    return result;
  }
  const std::string exp = root["experiment"].get<std::string>();

  root_known.push_back("seed");
  if (!root.contains("seed")) root["seed"] = 0;
  if (!root["seed"].is_number_integer())
    result.errors.push_back({"/seed", "expected an integer"});

  if (exp == "toy_mechanism") {
    validate_toy(root, result.errors, root_known);
  } else if (exp == "curvature_gap") {
    validate_curvature_gap(root, result.errors, root_known);
  } else if (exp == "saem_misalignment") {
    validate_saem_misalignment(root, result.errors, root_known);
  } else {
    result.errors.push_back({"/experiment", "unknown experiment '" + exp + "'"});
    return result;
  }

  for (auto it = root.begin(); it != root.end(); ++it)
    if (std::find(root_known.begin(), root_known.end(), it.key()) ==
        root_known.end())
      result.errors.push_back({"/" + it.key(), "unknown key"});
  return result;
}

int run_experiment(const std::string& config_path, const std::string& out_dir) {
  json config;
  try {
    std::ifstream f(config_path);
    if (!f) {
      fprintf(stderr, "cannot open config: %s\n", config_path.c_str());
      return 4;
    }
    config = json::parse(f);
  } catch (const json::exception& e) {
    fprintf(stderr, "config parse error: %s\n", e.what());
    return 2;
  }

  const ConfigResult checked = validate_config(config);
  if (!checked.ok()) {
    fprintf(stderr, "%s", checked.error_text().c_str());
    return 2;
  }

  try {
    const fs::path out(out_dir);
    fs::create_directories(out);
    Manifest mf(out, checked.normalized);
    const auto t0 = std::chrono::steady_clock::now();
    const std::string exp = checked.normalized.at("experiment").get<std::string>();
    if (exp == "toy_mechanism")
      run_toy_mechanism(checked.normalized, out, mf);
    else if (exp == "curvature_gap")
      run_curvature_gap(checked.normalized, out, mf);
    else
      run_saem_misalignment(checked.normalized, out, mf);
    const auto t1 = std::chrono::steady_clock::now();
    mf.finalize(std::chrono::duration<double>(t1 - t0).count());
    return 0;
  } catch (const config_error& e) {
    fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const numerical_error& e) {
    fprintf(stderr, "numerical failure: %s\n", e.what());
    return 3;
  } catch (const io_error& e) {
    fprintf(stderr, "io error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
}

int emit_plot_data(const std::string& results_dir) {
  const fs::path dir(results_dir);
  std::vector<std::string> missing;
  json manifest;
  {
    std::ifstream f(dir / "manifest.json");
    if (!f) {
      fprintf(stderr, "missing upstream artifact: %s\n",
              (dir / "manifest.json").string().c_str());
      return 4;
    }
    manifest = json::parse(f);
  }
  const std::string exp =
      manifest.at("config").at("experiment").get<std::string>();

  auto copy_with_header = [&](const fs::path& src, const fs::path& dst,
                              const std::string& header,
                              const std::vector<int>& col_sel) -> bool {
    std::ifstream in(src);
    if (!in) {
      missing.push_back(src.string());
      return false;
    }
    std::ofstream out(dst);
    out << header << "\n";
    std::string line;
    std::getline(in, line);  // skip source header
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::vector<std::string> cells;
      std::size_t pos = 0;
      while (true) {
        const auto comma = line.find(',', pos);
        cells.push_back(line.substr(pos, comma - pos));
        if (comma == std::string::npos) break;
        pos = comma + 1;
      }
      std::string row;
      for (std::size_t i = 0; i < col_sel.size(); ++i) {
        if (i) row += ",";
        row += cells[static_cast<std::size_t>(col_sel[i])];
      }
      out << row << "\n";
    }
    return true;
  };

  bool ok = true;
  if (exp == "toy_mechanism") {
    // toy_louis.csv: sigma_g, seed, mean_entropy_bits, mir, log10_tr_iobs
    ok = copy_with_header(dir / "toy_louis.csv", dir / "fig1a.csv",
                          "sigma_g,seed,entropy,mir,log10_tr", {0, 1, 2, 3, 4});
    if (ok)
      write_schema(dir / "fig1a.csv", {{"sigma_g", "float64"},
                                       {"seed", "int"},
                                       {"entropy", "float64"},
                                       {"mir", "float64"},
                                       {"log10_tr", "float64"}});
  } else if (exp == "curvature_gap") {
    // gap.csv columns: ckpt(0) tau(1) seed(2) sp(3) so(4) H_c(5) g_Q(6) ...
    ok = copy_with_header(dir / "gap.csv", dir / "fig1b.csv",
                          "ckpt,H_c,g_Q,sigma_obs,sigma_proc", {0, 5, 6, 4, 3});
    if (ok)
      write_schema(dir / "fig1b.csv", {{"ckpt", "hex64"},
                                       {"H_c", "float64"},
                                       {"g_Q", "float64"},
                                       {"sigma_obs", "float64"},
                                       {"sigma_proc", "float64"}});
  } else {
    // saem.csv columns: ckpt(0) spn(1) son(2) L(3) config(4) evidence(5)
    // d_stsp(6) le_error(7)
    ok = copy_with_header(dir / "saem.csv", dir / "fig1c.csv",
                          "ckpt,L,config,evidence,d_stsp,le_error",
                          {0, 3, 4, 5, 6, 7});
    if (ok)
      write_schema(dir / "fig1c.csv", {{"ckpt", "hex64"},
                                       {"L", "int"},
                                       {"config", "string"},
                                       {"evidence", "float64"},
                                       {"d_stsp", "float64"},
                                       {"le_error", "float64"}});
  }
  if (!ok) {
    for (const auto& m : missing)
      fprintf(stderr, "missing upstream artifact: %s\n", m.c_str());
    return 4;
  }
  return 0;
}

}  // namespace switchgeo

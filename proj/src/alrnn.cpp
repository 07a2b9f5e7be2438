#include "switchgeo/alrnn.hpp"

#include <cmath>
#include <fstream>

#include "switchgeo/rng.hpp"

namespace switchgeo {

using nlohmann::json;

void AlrnnParams::validate() const {
  const int m = M();
  if (P < 1 || P > m) throw config_error("AlrnnParams: need 1 <= P <= M");
  if (W.rows() != m || W.cols() != m || h.size() != m || E.rows() != m)
    throw config_error("AlrnnParams: inconsistent shapes");
  if (N() > m) throw config_error("AlrnnParams: need N <= M");
  if (!a.allFinite() || !W.allFinite() || !h.allFinite() || !E.allFinite())
    throw numerical_error("AlrnnParams: non-finite entries");
}

Vec AlrnnParams::flatten_drift() const {
  const int m = M();
  Vec theta(2 * m + m * m);
  theta.head(m) = a;
  for (int i = 0; i < m; ++i) theta.segment(m + i * m, m) = W.row(i).transpose();
  theta.tail(m) = h;
  return theta;
}

Vec phi_star(const Vec& z, int P) {
  Vec out = z;
  for (Eigen::Index i = z.size() - P; i < z.size(); ++i)
    out[i] = std::max(0.0, z[i]);
  return out;
}

Vec alrnn_step(const AlrnnParams& params, const Vec& z) {
  return params.a.cwiseProduct(z) + params.W * phi_star(z, params.P) + params.h;
}

SwitchingCode switching_code(const Vec& z, int P) {
  SwitchingCode code(P);
  const Eigen::Index off = z.size() - P;
  for (int j = 0; j < P; ++j) code[j] = z[off + j] > 0.0 ? 1 : 0;
  return code;
}

Mat gate_matrix(const SwitchingCode& code, int M) {
  Vec d = Vec::Ones(M);
  const int P = static_cast<int>(code.size());
  for (int j = 0; j < P; ++j) d[M - P + j] = code[j];
  return d.asDiagonal();
}

std::uint32_t pack_code(const SwitchingCode& code) {
  std::uint32_t bits = 0;
  for (Eigen::Index j = 0; j < code.size(); ++j)
    if (code[j]) bits |= (1u << j);
  return bits;
}

SwitchingCode unpack_code(std::uint32_t bits, int P) {
  SwitchingCode code(P);
  for (int j = 0; j < P; ++j) code[j] = (bits >> j) & 1u;
  return code;
}

Vec force_observed(const Vec& z, const Vec& x) {
  Vec out = z;
  out.head(x.size()) = x;
  return out;
}

Vec embed_init(const AlrnnParams& params, const Vec& x1) {
  return force_observed(params.E * x1, x1);
}

Mat step_jacobian(const AlrnnParams& params, const SwitchingCode& code) {
  const int M = params.M();
  const int P = params.P;
  Mat J = params.W;
  for (int j = 0; j < P; ++j)
    if (!code[j]) J.col(M - P + j).setZero();
  J.diagonal() += params.a;
  return J;
}

RolloutRecord itf_rollout(const AlrnnParams& params, const Mat& x, int tau) {
  params.validate();
  if (tau < 1) throw config_error("itf_rollout: tau must be >= 1");
  const auto T = x.rows();
  if (T < 2) throw config_error("itf_rollout: need T >= 2");
  const int M = params.M();
  const int N = params.N();
  if (x.cols() != N) throw config_error("itf_rollout: observation dim mismatch");

  RolloutRecord rec;
  rec.latents.resize(T, M);
  rec.codes.resize(T - 1, params.P);
  rec.predictions.resize(T - 1, N);
  rec.forced_mask.assign(static_cast<std::size_t>(T), 0);

  Vec z = embed_init(params, x.row(0).transpose());
  rec.latents.row(0) = z.transpose();
  for (Eigen::Index t = 1; t <= T; ++t)
    if (t % tau == 0) rec.forced_mask[static_cast<std::size_t>(t - 1)] = 1;

  for (Eigen::Index t = 0; t + 1 < T; ++t) {
    const bool forced = rec.forced_mask[static_cast<std::size_t>(t)] != 0;
    const Vec z_bar = forced ? force_observed(z, x.row(t).transpose()) : z;
    const SwitchingCode code = switching_code(z_bar, params.P);
    rec.codes.row(t) = code.transpose();
    z = alrnn_step(params, z_bar);
    rec.latents.row(t + 1) = z.transpose();
    rec.predictions.row(t + 1 - 1) = z.head(N).transpose();
  }
  return rec;
}

RolloutRecord free_rollout(const AlrnnParams& params, const Vec& z1, int T,
                           const FreeRolloutConfig& config) {
  params.validate();
  if (T < 1) throw config_error("free_rollout: T must be >= 1");
  if (config.gate_mode == GateMode::probit && !(config.sigma_g > 0.0))
    throw config_error("free_rollout: probit mode requires sigma_g > 0");
  const int M = params.M();
  const int N = params.N();
  const int P = params.P;

  RolloutRecord rec;
  rec.latents.resize(T, M);
  rec.codes.resize(std::max(0, T - 1), P);
  rec.predictions.resize(std::max(0, T - 1), N);
  rec.forced_mask.assign(static_cast<std::size_t>(T), 0);

  RngStream gates(config.seed, "rollout/gates");
  RngStream noise(config.seed, "rollout/noise");

  Vec z = z1;
  rec.latents.row(0) = z.transpose();
  for (int t = 0; t + 1 < T; ++t) {
    SwitchingCode code(P);
    if (config.gate_mode == GateMode::hard) {
      code = switching_code(z, P);
    } else {
      for (int j = 0; j < P; ++j) {
        const double p1 = norm_cdf(z[M - P + j] / config.sigma_g);
        code[j] = gates.uniform() < p1 ? 1 : 0;
      }
    }
    rec.codes.row(t) = code.transpose();
    Vec g = z;
    for (int j = 0; j < P; ++j)
      if (!code[j]) g[M - P + j] = 0.0;
    z = params.a.cwiseProduct(z) + params.W * g + params.h;
    if (config.sigma_proc > 0.0)
      for (int i = 0; i < M; ++i) z[i] += config.sigma_proc * noise.normal();

    if (!z.allFinite() || z.cwiseAbs().maxCoeff() > 1e8) {
      rec.diverged_at = t + 2;  // 1-based index of the failed state
      rec.latents.conservativeResize(t + 1, M);
      rec.codes.conservativeResize(t + 1, P);
      rec.predictions.conservativeResize(t, N);
      rec.forced_mask.resize(static_cast<std::size_t>(t + 1));
      return rec;
    }
    rec.latents.row(t + 1) = z.transpose();
    rec.predictions.row(t) = z.head(N).transpose();
  }
  return rec;
}

std::uint64_t checkpoint_hash(const AlrnnParams& params) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  auto eat = [&h](const double* p, Eigen::Index n) {
    h = fnv1a_bytes(p, static_cast<std::size_t>(n) * sizeof(double), h);
  };
  eat(params.a.data(), params.a.size());
  Mat wr = params.W.transpose();  // row-major bytes
  eat(wr.data(), wr.size());
  eat(params.h.data(), params.h.size());
  Mat er = params.E.transpose();
  eat(er.data(), er.size());
  const int dims[3] = {params.M(), params.P, params.N()};
  h = fnv1a_bytes(dims, sizeof(dims), h);
  return h;
}

void save_checkpoint(const std::string& stem, const AlrnnParams& params,
                     const json& meta) {
  std::ofstream bin(stem + ".bin", std::ios::binary);
  if (!bin) throw io_error("save_checkpoint: cannot open " + stem + ".bin");
  auto put = [&bin](const double* p, Eigen::Index n) {
    bin.write(reinterpret_cast<const char*>(p),
              static_cast<std::streamsize>(n) * sizeof(double));
  };
  put(params.a.data(), params.a.size());
  Mat wr = params.W.transpose();
  put(wr.data(), wr.size());
  put(params.h.data(), params.h.size());
  Mat er = params.E.transpose();
  put(er.data(), er.size());
  bin.close();

  json side{{"M", params.M()},
            {"P", params.P},
            {"N", params.N()},
            {"layout", {"a", "W", "h", "E"}},
            {"hash", hash_hex(checkpoint_hash(params))},
            {"meta", meta}};
  std::ofstream js(stem + ".json");
  if (!js) throw io_error("save_checkpoint: cannot open " + stem + ".json");
  js << side.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::string& stem) {
  std::ifstream js(stem + ".json");
  if (!js) throw io_error("load_checkpoint: missing " + stem + ".json");
  json side = json::parse(js);
  const int M = side.at("M").get<int>();
  const int P = side.at("P").get<int>();
  const int N = side.at("N").get<int>();

  std::ifstream bin(stem + ".bin", std::ios::binary);
  if (!bin) throw io_error("load_checkpoint: missing " + stem + ".bin");
  auto get = [&bin, &stem](double* p, Eigen::Index n) {
    bin.read(reinterpret_cast<char*>(p),
             static_cast<std::streamsize>(n) * sizeof(double));
    if (!bin) throw io_error("load_checkpoint: truncated blob in " + stem);
  };

  Checkpoint ck;
  ck.params.P = P;
  ck.params.a.resize(M);
  get(ck.params.a.data(), M);
  Mat wr(M, M);
  get(wr.data(), static_cast<Eigen::Index>(M) * M);
  ck.params.W = wr.transpose();
  ck.params.h.resize(M);
  get(ck.params.h.data(), M);
  Mat er(N, M);
  get(er.data(), static_cast<Eigen::Index>(M) * N);
  ck.params.E = er.transpose();
  ck.meta = side.value("meta", json::object());
  ck.hash = checkpoint_hash(ck.params);
  if (hash_hex(ck.hash) != side.at("hash").get<std::string>())
    throw io_error("load_checkpoint: content hash mismatch for " + stem);
  return ck;
}

}  // namespace switchgeo

#include "switchgeo/fisher.hpp"

#include <fstream>

#include "switchgeo/parallel.hpp"

namespace switchgeo {

using nlohmann::json;

double CurvatureMatrix::min_eigenvalue() const {
  Eigen::SelfAdjointEigenSolver<Mat> eig(0.5 * (entries + entries.transpose()),
                                         Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff();
}

Mat param_jacobian_blocks(const Vec& z_bar, int P) {
  const auto M = z_bar.size();
  const auto p = 2 * M + M * M;
  Mat V = Mat::Zero(M, p);
  const Vec phi = phi_star(z_bar, P);
  for (Eigen::Index i = 0; i < M; ++i) {
    V(i, i) = z_bar[i];                             // a block
    V.block(i, M + i * M, 1, M) = phi.transpose();  // row i of W, row-major
    V(i, M + M * M + i) = 1.0;                      // h block
  }
  return V;
}

Mat sensitivity_step(const Mat& S_t, const AlrnnParams& params,
                     const Vec& z_bar_t, const SwitchingCode& code_t,
                     bool forced) {
  const Mat J = step_jacobian(params, code_t);
  Mat S_in = S_t;
  if (forced) S_in.topRows(params.N()).setZero();  // (I - B^T B) S_t
  return J * S_in + param_jacobian_blocks(z_bar_t, params.P);
}

CurvatureMatrix itf_fisher(const AlrnnParams& params, const Mat& x, int tau,
                           double sigma_obs) {
  params.validate();
  if (!(sigma_obs > 0.0)) throw config_error("itf_fisher: sigma_obs must be > 0");
  const auto T = x.rows();
  if (T < 2) throw config_error("itf_fisher: need T >= 2");
  const int M = params.M();
  const int N = params.N();
  const Eigen::Index p = 2 * M + static_cast<Eigen::Index>(M) * M;

  Mat G = Mat::Zero(p, p);
  Mat S = Mat::Zero(M, p);
  Vec z = embed_init(params, x.row(0).transpose());
  for (Eigen::Index t = 0; t + 1 < T; ++t) {
    const bool forced = ((t + 1) % tau == 0);
    const Vec z_bar = forced ? force_observed(z, x.row(t).transpose()) : z;
    const SwitchingCode code = switching_code(z_bar, params.P);
    S = sensitivity_step(S, params, z_bar, code, forced);
    z = alrnn_step(params, z_bar);
    const Mat U = S.topRows(N);  // B S_{t+1}
    G.selfadjointView<Eigen::Lower>().rankUpdate(U.transpose(), 1.0);
  }
  G = G.selfadjointView<Eigen::Lower>();

  CurvatureMatrix out;
  out.entries = G / (static_cast<double>(T - 1) * sigma_obs * sigma_obs);
  out.per_step_normalized = true;
  out.symmetrize();
  return out;
}

CurvatureMatrix itf_fisher_batch(const AlrnnParams& params,
                                 const std::vector<Mat>& sequences, int tau,
                                 double sigma_obs) {
  if (sequences.empty()) throw config_error("itf_fisher_batch: no sequences");
  std::vector<CurvatureMatrix> parts(sequences.size());
  par::parallel_for(sequences.size(), [&](std::size_t i) {
    parts[i] = itf_fisher(params, sequences[i], tau, sigma_obs);
  });
  CurvatureMatrix out = parts[0];
  for (std::size_t i = 1; i < parts.size(); ++i) out.entries += parts[i].entries;
  out.entries /= static_cast<double>(parts.size());
  return out;
}

void save_matrix(const std::string& stem, const CurvatureMatrix& m,
                 const json& extra_meta) {
  std::ofstream bin(stem + ".bin", std::ios::binary);
  if (!bin) throw io_error("save_matrix: cannot open " + stem + ".bin");
  Mat rm = m.entries.transpose();  // row-major bytes
  bin.write(reinterpret_cast<const char*>(rm.data()),
            static_cast<std::streamsize>(rm.size()) * sizeof(double));
  bin.close();

  json side{{"p", m.p()},
            {"blocks", "a,vecW_row_major,h"},
            {"per_step_normalized", m.per_step_normalized},
            {"hash", hash_hex(fnv1a_bytes(rm.data(),
                                          static_cast<std::size_t>(rm.size()) *
                                              sizeof(double)))}};
  side.update(extra_meta);
  std::ofstream js(stem + ".json");
  if (!js) throw io_error("save_matrix: cannot open " + stem + ".json");
  js << side.dump(2) << "\n";
}

CurvatureMatrix load_matrix(const std::string& stem) {
  std::ifstream js(stem + ".json");
  if (!js) throw io_error("load_matrix: missing " + stem + ".json");
  json side = json::parse(js);
  const auto p = side.at("p").get<Eigen::Index>();

  std::ifstream bin(stem + ".bin", std::ios::binary);
  if (!bin) throw io_error("load_matrix: missing " + stem + ".bin");
  Mat rm(p, p);
  bin.read(reinterpret_cast<char*>(rm.data()),
           static_cast<std::streamsize>(p) * p * sizeof(double));
  if (!bin) throw io_error("load_matrix: truncated blob in " + stem);

  CurvatureMatrix out;
  out.entries = rm.transpose();
  out.per_step_normalized = side.at("per_step_normalized").get<bool>();
  return out;
}

}  // namespace switchgeo

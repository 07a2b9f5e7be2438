#include "switchgeo/train.hpp"

#include <cmath>
#include <fstream>

#include "switchgeo/parallel.hpp"
#include "switchgeo/rng.hpp"

namespace switchgeo {

void TrainConfig::validate() const {
  if (M < 1 || P < 1 || P > M) throw config_error("TrainConfig: need 1 <= P <= M");
  if (tau < 1 || batch_size < 1 || bptt_len < 2 || epochs < 1 ||
      batches_per_epoch < 1)
    throw config_error("TrainConfig: counts must be positive (bptt_len >= 2)");
  if (!(lr_start > 0.0) || !(lr_end > 0.0) || lr_end > lr_start)
    throw config_error("TrainConfig: need 0 < lr_end <= lr_start");
}

double itf_loss(const AlrnnParams& params, const Mat& x, int tau) {
  const RolloutRecord rec = itf_rollout(params, x, tau);
  const auto T = x.rows();
  double acc = 0.0;
  for (Eigen::Index t = 0; t + 1 < T; ++t)
    acc += (rec.predictions.row(t) - x.row(t + 1)).squaredNorm();
  return acc / static_cast<double>(T - 1);
}

Vec ParamGrad::flatten() const {
  const auto M = a.size();
  const auto N = E.cols();
  Vec out(2 * M + M * M + M * N);
  out.head(M) = a;
  for (Eigen::Index i = 0; i < M; ++i)
    out.segment(M + i * M, M) = W.row(i).transpose();
  out.segment(M + M * M, M) = h;
  for (Eigen::Index i = 0; i < M; ++i)
    out.segment(2 * M + M * M + i * N, N) = E.row(i).transpose();
  return out;
}

namespace {

// Reverse-mode gradient of the ITF loss on one sequence; accumulates into g.
double grad_one_sequence(const AlrnnParams& params, const Mat& x, int tau,
                         ParamGrad& g) {
  const auto T = x.rows();
  const int M = params.M();
  const int N = params.N();
  const int P = params.P;

  // forward pass, keeping the fed states and codes
  Mat z_bar(T - 1, M);
  CodeMatrix codes(T - 1, P);
  std::vector<char> forced(static_cast<std::size_t>(T - 1), 0);
  Mat z(T, M);
  Vec state = embed_init(params, x.row(0).transpose());
  z.row(0) = state.transpose();
  double loss = 0.0;
  for (Eigen::Index t = 0; t + 1 < T; ++t) {
    const bool is_forced = ((t + 1) % tau == 0);
    forced[static_cast<std::size_t>(t)] = is_forced;
    Vec fed = is_forced ? force_observed(state, x.row(t).transpose()) : state;
    z_bar.row(t) = fed.transpose();
    codes.row(t) = switching_code(fed, P).transpose();
    state = alrnn_step(params, fed);
    z.row(t + 1) = state.transpose();
    loss += (state.head(N).transpose() - x.row(t + 1)).squaredNorm();
  }
  const double scale = 2.0 / static_cast<double>(T - 1);
  loss /= static_cast<double>(T - 1);

  // reverse pass
  Vec lambda = Vec::Zero(M);  // dL/dz_t for the raw state
  lambda.head(N) =
      scale * (z.row(T - 1).head(N) - x.row(T - 1)).transpose();
  for (Eigen::Index t = T - 2; t >= 0; --t) {
    const Vec fed = z_bar.row(t).transpose();
    const Vec phi = phi_star(fed, P);
    // parameter blocks at this step
    g.a += fed.cwiseProduct(lambda);
    g.W += lambda * phi.transpose();
    g.h += lambda;
    // through the state: J^T lambda with J = A + W D(c)
    Vec gbar = params.a.cwiseProduct(lambda);
    Vec wt = params.W.transpose() * lambda;
    for (int j = 0; j < P; ++j)
      if (!codes(t, j)) wt[M - P + j] = 0.0;
    gbar += wt;
    if (forced[static_cast<std::size_t>(t)]) gbar.head(N).setZero();
    lambda = gbar;
    if (t >= 1)
      lambda.head(N) += scale * (z.row(t).head(N) - x.row(t)).transpose();
  }
  // z1 = (I - B^T B) E x1 + B^T x1: only the unobserved block reaches E
  Vec lam1 = lambda;
  lam1.head(N).setZero();
  g.E += lam1 * x.row(0);
  return loss;
}

ParamGrad zero_grad(const AlrnnParams& params) {
  ParamGrad g;
  g.a = Vec::Zero(params.M());
  g.W = Mat::Zero(params.M(), params.M());
  g.h = Vec::Zero(params.M());
  g.E = Mat::Zero(params.M(), params.N());
  return g;
}

}  // namespace

ParamGrad itf_loss_grad(const AlrnnParams& params, const std::vector<Mat>& batch,
                        int tau, double* mean_loss) {
  params.validate();
  if (batch.empty()) throw config_error("itf_loss_grad: batch must be nonempty");

  std::vector<ParamGrad> partial(batch.size());
  std::vector<double> losses(batch.size());
  par::parallel_for(batch.size(), [&](std::size_t i) {
    ParamGrad g = zero_grad(params);
    losses[i] = grad_one_sequence(params, batch[i], tau, g);
    partial[i] = std::move(g);
  });

  ParamGrad g = zero_grad(params);
  double loss = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {  // fixed reduction order
    g.a += partial[i].a;
    g.W += partial[i].W;
    g.h += partial[i].h;
    g.E += partial[i].E;
    loss += losses[i];
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  g.a *= inv;
  g.W *= inv;
  g.h *= inv;
  g.E *= inv;
  if (mean_loss != nullptr) *mean_loss = loss * inv;
  return g;
}

void radam_update(RadamState& state, Vec& theta, const Vec& grad, double lr) {
  if (state.m.size() != grad.size() || theta.size() != grad.size())
    throw config_error("radam_update: shape mismatch");
  state.step += 1;
  const double b1 = state.beta1, b2 = state.beta2;
  const auto t = static_cast<double>(state.step);
  state.m = b1 * state.m + (1.0 - b1) * grad;
  state.v = b2 * state.v + (1.0 - b2) * grad.cwiseProduct(grad);
  const double bc1 = 1.0 - std::pow(b1, t);
  const double bc2 = 1.0 - std::pow(b2, t);
  const Vec m_hat = state.m / bc1;
  const double rho_inf = 2.0 / (1.0 - b2) - 1.0;
  const double rho_t = rho_inf - 2.0 * t * std::pow(b2, t) / bc2;
  if (rho_t > 4.0) {
    const double rect = std::sqrt(((rho_t - 4.0) * (rho_t - 2.0) * rho_inf) /
                                  ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t));
    const Vec denom = (state.v / bc2).cwiseSqrt().array() + state.eps;
    theta -= lr * rect * m_hat.cwiseQuotient(denom);
  } else {
    theta -= lr * m_hat;  // un-rectified momentum step
  }
}

double lr_schedule(int epoch, int epochs, double lr_start, double lr_end) {
  if (epoch < 0 || epoch >= epochs) throw config_error("lr_schedule: bad epoch");
  if (epochs == 1) return lr_start;
  const double frac = static_cast<double>(epoch) / static_cast<double>(epochs - 1);
  return lr_start * std::pow(lr_end / lr_start, frac);
}

AlrnnParams init_params(std::uint64_t seed, int M, int P, int N) {
  if (M < 1 || P < 1 || P > M || N < 1 || N > M)
    throw config_error("init_params: invalid dimensions");
  AlrnnParams p;
  p.P = P;
  p.h = Vec::Zero(M);

  RngStream w_rng(seed, "init/W");
  p.W.resize(M, M);
  for (int i = 0; i < M; ++i)
    for (int j = 0; j < M; ++j) p.W(i, j) = 0.1 * w_rng.normal();

  // a from the diagonal of G G^T / M scaled to largest eigenvalue 1
  RngStream a_rng(seed, "init/A");
  Mat G(M, M);
  for (int i = 0; i < M; ++i)
    for (int j = 0; j < M; ++j) G(i, j) = a_rng.normal();
  Mat S = (G * G.transpose()) / static_cast<double>(M);
  Eigen::SelfAdjointEigenSolver<Mat> eig(S);
  S /= eig.eigenvalues().maxCoeff();
  p.a = S.diagonal();

  RngStream e_rng(seed, "init/E");
  const double bound = 1.0 / std::sqrt(static_cast<double>(N));
  p.E.resize(M, N);
  for (int i = 0; i < M; ++i)
    for (int j = 0; j < N; ++j) p.E(i, j) = e_rng.uniform(-bound, bound);
  return p;
}

TrainResult train(const TrainConfig& config, const TrajectoryBundle& bundle) {
  config.validate();
  const Mat& x = bundle.observations;
  const auto T = x.rows();
  const int N = static_cast<int>(x.cols());
  if (T < config.bptt_len)
    throw config_error("train: sequence shorter than bptt_len");

  AlrnnParams params = init_params(config.seed, config.M, config.P, N);
  const int M = config.M;
  RadamState opt = RadamState::zeros(2 * M + M * M + static_cast<Eigen::Index>(M) * N);
  RngStream windows(config.seed, "train/windows");

  TrainResult result;
  const auto n_starts = static_cast<std::uint64_t>(T - config.bptt_len + 1);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = lr_schedule(epoch, config.epochs, config.lr_start, config.lr_end);
    double epoch_loss = 0.0;
    for (int b = 0; b < config.batches_per_epoch; ++b) {
      std::vector<Mat> batch(static_cast<std::size_t>(config.batch_size));
      for (auto& w : batch) {
        const auto start = static_cast<Eigen::Index>(windows.below(n_starts));
        w = x.middleRows(start, config.bptt_len);
      }
      double loss = 0.0;
      const ParamGrad grad = itf_loss_grad(params, batch, config.tau, &loss);
      if (!std::isfinite(loss))
        throw numerical_error("train: non-finite loss at epoch " +
                              std::to_string(epoch) + " batch " + std::to_string(b));
      epoch_loss += loss;

      Vec theta(opt.m.size());
      theta.head(M) = params.a;
      for (int i = 0; i < M; ++i) theta.segment(M + i * M, M) = params.W.row(i);
      theta.segment(M + M * M, M) = params.h;
      for (int i = 0; i < M; ++i)
        theta.segment(2 * M + M * M + static_cast<Eigen::Index>(i) * N, N) =
            params.E.row(i);
      radam_update(opt, theta, grad.flatten(), lr);
      params.a = theta.head(M);
      for (int i = 0; i < M; ++i) params.W.row(i) = theta.segment(M + i * M, M);
      params.h = theta.segment(M + M * M, M);
      for (int i = 0; i < M; ++i)
        params.E.row(i) =
            theta.segment(2 * M + M * M + static_cast<Eigen::Index>(i) * N, N);
    }
    result.history.push_back(
        {epoch, epoch_loss / config.batches_per_epoch, lr});
  }
  result.params = std::move(params);
  return result;
}

void write_history_csv(const std::string& path,
                       const std::vector<EpochLog>& history) {
  std::ofstream f(path);
  if (!f) throw io_error("write_history_csv: cannot open " + path);
  f << "epoch,mean_loss,lr\n";
  for (const auto& e : history)
    f << e.epoch << "," << format_double(e.mean_loss) << "," << format_double(e.lr)
      << "\n";
}

}  // namespace switchgeo

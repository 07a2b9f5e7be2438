#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "switchgeo/alrnn.hpp"
#include "switchgeo/trajectory.hpp"

namespace switchgeo {

struct TrainConfig {
  int M = 30;
  int P = 10;
  int tau = 16;
  int batch_size = 16;
  int bptt_len = 200;
  int epochs = 2000;
  int batches_per_epoch = 50;
  double lr_start = 1e-3;
  double lr_end = 1e-5;
  std::uint64_t seed = 0;

  void validate() const;
};

// Mean over t of ||B z_{t+1} - x_{t+1}||^2 along the ITF rollout.
double itf_loss(const AlrnnParams& params, const Mat& x, int tau);

struct ParamGrad {
  Vec a;
  Mat W;
  Vec h;
  Mat E;

  Vec flatten() const;  // [a; vec(W); h; vec(E)], row-major blocks
};

// Exact reverse-mode gradient of the mean batch loss. The overwrite treats
// x_t as constant, so the observed-block adjoint is zeroed at forcing times;
// E receives gradient only through z1.
ParamGrad itf_loss_grad(const AlrnnParams& params,
                        const std::vector<Mat>& batch, int tau,
                        double* mean_loss = nullptr);

struct RadamState {
  Vec m;  // first moment
  Vec v;  // second moment
  long long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static RadamState zeros(Eigen::Index n) {
    RadamState s;
    s.m = Vec::Zero(n);
    s.v = Vec::Zero(n);
    return s;
  }
};

// One RAdam step with variance rectification; falls back to the un-rectified
// momentum update while the rectification term is inactive.
void radam_update(RadamState& state, Vec& theta, const Vec& grad, double lr);

// Geometric interpolation lr_start * (lr_end/lr_start)^(epoch/(epochs-1)).
double lr_schedule(int epoch, int epochs, double lr_start, double lr_end);

// h = 0; W ~ N(0, 0.01); a = diag of a random SPD matrix scaled to largest
// eigenvalue 1; E ~ U(-1/sqrt(N), 1/sqrt(N)).
AlrnnParams init_params(std::uint64_t seed, int M, int P, int N);

struct EpochLog {
  int epoch;
  double mean_loss;
  double lr;
};

struct TrainResult {
  AlrnnParams params;
  std::vector<EpochLog> history;
};

// Minimizes the ITF loss with RAdam on uniformly sampled contiguous windows
// of the standardized training sequence.
TrainResult train(const TrainConfig& config, const TrajectoryBundle& bundle);

void write_history_csv(const std::string& path,
                       const std::vector<EpochLog>& history);

}  // namespace switchgeo

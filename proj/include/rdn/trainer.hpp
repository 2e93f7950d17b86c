#pragma once

#include <cstdint>
#include <vector>

#include "rdn/model.hpp"
#include "rdn/tensor.hpp"

namespace rdn {

// Ground-truth pixel pair depicting the same scene point.
struct Correspondence {
  Keypoint p1;
  Keypoint p2;
};

struct TrainConfig {
  double margin = 1.0;           // M
  int safe_radius = 4;           // K, Chebyshev pixels
  int negative_pool_stride = 4;  // mining grid stride
  int epochs = 50;
  double lr0 = 1e-3;
  int lr_halving_period = 10;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;

  void validate() const;
};

// Triplet margin term in squared-distance form: max(0, M + p^2 - n^2).
double triplet_term(double p, double n, double margin);

struct HardestNegative {
  double distance = 0.0;
  // true: the negative pairs d1(c.p1) with a pool-2 candidate;
  // false: it pairs d2(c.p2) with a pool-1 candidate.
  bool from_second_pool = true;
  Keypoint candidate;
};

// Exhaustive hard-negative mining over both pools, excluding candidates
// within Chebyshev radius K of the true match.
HardestNegative hardest_negative(const Correspondence& c,
                                 const DescriptorField& field1,
                                 const DescriptorField& field2,
                                 const std::vector<Keypoint>& pool1,
                                 const std::vector<Keypoint>& pool2,
                                 int safe_radius);

struct PairLossResult {
  double loss = 0.0;
  int correspondence_count = 0;
};

// Eq-style summed triplet loss over the correspondence set; fills *grads
// with gradients for every parameter (hardest-negative selection is held
// fixed during differentiation).
PairLossResult pair_loss(const Tensor& image1, const Tensor& image2,
                         const std::vector<Correspondence>& corrs,
                         const RdnWeights& weights, RdnGrads& grads,
                         const RdnConfig& model_config,
                         const TrainConfig& config);

// lr0 / 2^floor(epoch / halving_period)
double lr_schedule(int epoch, const TrainConfig& config);

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  long step_count = 0;

  static AdamState like(const std::vector<ParamBlock>& blocks);
};

void adam_step(std::vector<ParamBlock>& params, AdamState& state, double lr,
               const TrainConfig& config);

struct TrainingSample {
  Tensor image1;
  Tensor image2;
  std::vector<Correspondence> corrs;
};

struct EpochStat {
  int epoch = 0;
  double mean_loss = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  RdnWeights weights;
  std::vector<EpochStat> curve;
};

// Batch-1 training: one optimizer step per pair, pair order shuffled per
// epoch by a generator seeded from config.seed. Deterministic per seed.
TrainResult train(const std::vector<TrainingSample>& dataset,
                  RdnWeights initial, const RdnConfig& model_config,
                  const TrainConfig& config);

}  // namespace rdn

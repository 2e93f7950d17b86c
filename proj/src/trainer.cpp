#include "rdn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "rdn/kernels.hpp"
#include "rdn/matching.hpp"

namespace rdn {

void TrainConfig::validate() const {
  if (margin <= 0.0) throw ContractViolation("margin must be positive");
  if (safe_radius < 0) throw ContractViolation("safe_radius must be >= 0");
  if (negative_pool_stride < 1) {
    throw ContractViolation("negative_pool_stride must be >= 1");
  }
  if (lr0 <= 0.0) throw ContractViolation("lr0 must be positive");
  if (lr_halving_period < 1) {
    throw ContractViolation("lr_halving_period must be >= 1");
  }
  if (epochs < 0) throw ContractViolation("epochs must be >= 0");
}

double triplet_term(double p, double n, double margin) {
  return std::max(0.0, margin + p * p - n * n);
}

namespace {

int chebyshev(const Keypoint& a, const Keypoint& b) {
  return std::max(std::abs(a.x - b.x), std::abs(a.y - b.y));
}

}  // namespace

HardestNegative hardest_negative(const Correspondence& c,
                                 const DescriptorField& field1,
                                 const DescriptorField& field2,
                                 const std::vector<Keypoint>& pool1,
                                 const std::vector<Keypoint>& pool2,
                                 int safe_radius) {
  const int dim = field1.channels;
  const double* anchor1 = field1.pixel(c.p1.y, c.p1.x).data();
  const double* anchor2 = field2.pixel(c.p2.y, c.p2.x).data();

  HardestNegative best;
  best.distance = std::numeric_limits<double>::infinity();
  bool found = false;
  for (const Keypoint& k : pool2) {
    if (chebyshev(k, c.p2) <= safe_radius) continue;
    const double d = kernels::squared_distance(
        anchor1, field2.pixel(k.y, k.x).data(), dim);
    if (d < best.distance) {
      best.distance = d;
      best.from_second_pool = true;
      best.candidate = k;
      found = true;
    }
  }
  for (const Keypoint& k : pool1) {
    if (chebyshev(k, c.p1) <= safe_radius) continue;
    const double d = kernels::squared_distance(
        anchor2, field1.pixel(k.y, k.x).data(), dim);
    if (d < best.distance) {
      best.distance = d;
      best.from_second_pool = false;
      best.candidate = k;
      found = true;
    }
  }
  if (!found) {
    throw DegeneratePoolError(
        "no negative candidates outside the safe radius");
  }
  best.distance = std::sqrt(best.distance);
  return best;
}

PairLossResult pair_loss(const Tensor& image1, const Tensor& image2,
                         const std::vector<Correspondence>& corrs,
                         const RdnWeights& weights, RdnGrads& grads,
                         const RdnConfig& model_config,
                         const TrainConfig& config) {
  if (corrs.empty()) {
    throw ContractViolation("pair_loss requires at least one correspondence");
  }
  grads.zero();

  GradTape tape1, tape2;
  const RdnForwardNodes n1 =
      describe_on_tape(tape1, image1, weights, &grads, model_config);
  const RdnForwardNodes n2 =
      describe_on_tape(tape2, image2, weights, &grads, model_config);
  const DescriptorField& f1 = tape1.value(n1.d_output);
  const DescriptorField& f2 = tape2.value(n2.d_output);

  const std::vector<Keypoint> pool1 =
      uniform_grid(image1.height, image1.width, config.negative_pool_stride, 0);
  const std::vector<Keypoint> pool2 =
      uniform_grid(image2.height, image2.width, config.negative_pool_stride, 0);

  Tensor g1(f1.height, f1.width, f1.channels);
  Tensor g2(f2.height, f2.width, f2.channels);
  const int dim = f1.channels;

  double loss = 0.0;
  for (const Correspondence& c : corrs) {
    if (c.p1.y < 0 || c.p1.y >= f1.height || c.p1.x < 0 || c.p1.x >= f1.width ||
        c.p2.y < 0 || c.p2.y >= f2.height || c.p2.x < 0 || c.p2.x >= f2.width) {
      throw BoundsError("correspondence outside image bounds");
    }
    const double* a1 = f1.pixel(c.p1.y, c.p1.x).data();
    const double* a2 = f2.pixel(c.p2.y, c.p2.x).data();
    const double p = std::sqrt(kernels::squared_distance(a1, a2, dim));
    const HardestNegative hn =
        hardest_negative(c, f1, f2, pool1, pool2, config.safe_radius);
    const double term = triplet_term(p, hn.distance, config.margin);
    loss += term;
    if (term <= 0.0) continue;

    // d(term)/d(p^2) = 1, d(term)/d(n^2) = -1 on the active branch;
    // the hardest-negative selection is held fixed.
    double* gp1 = g1.data.data() + g1.index(c.p1.y, c.p1.x, 0);
    double* gp2 = g2.data.data() + g2.index(c.p2.y, c.p2.x, 0);
    for (int d = 0; d < dim; ++d) {
      const double diff = a1[d] - a2[d];
      gp1[d] += 2.0 * diff;
      gp2[d] -= 2.0 * diff;
    }
    if (hn.from_second_pool) {
      const double* neg = f2.pixel(hn.candidate.y, hn.candidate.x).data();
      double* gneg = g2.data.data() + g2.index(hn.candidate.y, hn.candidate.x, 0);
      for (int d = 0; d < dim; ++d) {
        const double diff = a1[d] - neg[d];
        gp1[d] -= 2.0 * diff;
        gneg[d] += 2.0 * diff;
      }
    } else {
      const double* neg = f1.pixel(hn.candidate.y, hn.candidate.x).data();
      double* gneg = g1.data.data() + g1.index(hn.candidate.y, hn.candidate.x, 0);
      for (int d = 0; d < dim; ++d) {
        const double diff = a2[d] - neg[d];
        gp2[d] -= 2.0 * diff;
        gneg[d] += 2.0 * diff;
      }
    }
  }

  tape1.backward(n1.d_output, g1);
  tape2.backward(n2.d_output, g2);
  return {loss, static_cast<int>(corrs.size())};
}

double lr_schedule(int epoch, const TrainConfig& config) {
  if (epoch < 0) throw ContractViolation("epoch must be >= 0");
  return config.lr0 / std::pow(2.0, epoch / config.lr_halving_period);
}

AdamState AdamState::like(const std::vector<ParamBlock>& blocks) {
  AdamState s;
  s.m.reserve(blocks.size());
  s.v.reserve(blocks.size());
  for (const ParamBlock& b : blocks) {
    s.m.emplace_back(b.size, 0.0);
    s.v.emplace_back(b.size, 0.0);
  }
  return s;
}

void adam_step(std::vector<ParamBlock>& params, AdamState& state, double lr,
               const TrainConfig& config) {
  if (lr <= 0.0) throw ContractViolation("learning rate must be positive");
  if (params.size() != state.m.size()) {
    throw ContractViolation("adam state does not match parameter blocks");
  }
  state.step_count += 1;
  const double b1 = config.adam_beta1;
  const double b2 = config.adam_beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step_count));
  for (std::size_t bi = 0; bi < params.size(); ++bi) {
    ParamBlock& block = params[bi];
    std::vector<double>& m = state.m[bi];
    std::vector<double>& v = state.v[bi];
    for (std::size_t i = 0; i < block.size; ++i) {
      const double g = block.analytic_grad[i];
      if (!std::isfinite(g)) {
        throw TrainingDivergence("non-finite gradient in block " + block.name);
      }
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      block.values[i] -= lr * m_hat / (std::sqrt(v_hat) + config.adam_eps);
    }
  }
}

TrainResult train(const std::vector<TrainingSample>& dataset,
                  RdnWeights initial, const RdnConfig& model_config,
                  const TrainConfig& config) {
  config.validate();
  if (dataset.empty()) throw ContractViolation("empty training dataset");

  TrainResult result;
  result.weights = std::move(initial);
  RdnGrads grads(result.weights);
  std::vector<ParamBlock> blocks = parameter_blocks(result.weights, grads);
  AdamState adam = AdamState::like(blocks);
  std::mt19937_64 rng(config.seed);

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = lr_schedule(epoch, config);
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t idx : order) {
      const TrainingSample& s = dataset[idx];
      const PairLossResult r = pair_loss(s.image1, s.image2, s.corrs,
                                         result.weights, grads, model_config,
                                         config);
      if (!std::isfinite(r.loss)) {
        throw TrainingDivergence("non-finite loss at epoch " +
                                 std::to_string(epoch));
      }
      loss_sum += r.loss;
      adam_step(blocks, adam, lr, config);
    }
    result.curve.push_back(
        {epoch, loss_sum / static_cast<double>(dataset.size()), lr});
  }
  return result;
}

}  // namespace rdn

#include "rdn/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace rdn {

int GradTape::emplace(Tensor value, Node node) {
  const int id = static_cast<int>(values_.size());
  values_.push_back(std::move(value));
  grads_.emplace_back();
  nodes_.push_back(std::move(node));
  return id;
}

Tensor& GradTape::grad_buffer(int id) {
  Tensor& g = grads_[id];
  if (g.data.empty()) {
    const Tensor& v = values_[id];
    g = Tensor(v.height, v.width, v.channels);
  }
  return g;
}

int GradTape::input(Tensor value) {
  return emplace(std::move(value), Node{nullptr});
}

int GradTape::conv2d(int x, const ConvLayer& layer, ConvGrad* grad) {
  Tensor out = rdn::conv2d(values_[x], layer);
  Node node;
  node.backward = [x, &layer, grad](GradTape& t, int self) {
    Tensor gin = conv2d_backward(t.values_[x], layer, t.grads_[self], grad);
    Tensor& dst = t.grad_buffer(x);
    for (std::size_t i = 0; i < dst.size(); ++i) dst.data[i] += gin.data[i];
  };
  return emplace(std::move(out), std::move(node));
}

int GradTape::relu(int x) {
  Tensor out = rdn::relu(values_[x]);
  Node node;
  node.backward = [x](GradTape& t, int self) {
    Tensor gin = relu_backward(t.values_[x], t.grads_[self]);
    Tensor& dst = t.grad_buffer(x);
    for (std::size_t i = 0; i < dst.size(); ++i) dst.data[i] += gin.data[i];
  };
  return emplace(std::move(out), std::move(node));
}

int GradTape::avg_pool_blocks(int x, int window) {
  Tensor out = rdn::avg_pool_blocks(values_[x], window);
  const int in_h = values_[x].height;
  const int in_w = values_[x].width;
  Node node;
  node.backward = [x, window, in_h, in_w](GradTape& t, int self) {
    Tensor gin = avg_pool_blocks_backward(in_h, in_w, window, t.grads_[self]);
    Tensor& dst = t.grad_buffer(x);
    for (std::size_t i = 0; i < dst.size(); ++i) dst.data[i] += gin.data[i];
  };
  return emplace(std::move(out), std::move(node));
}

int GradTape::bilinear_upsample(int x, int out_height, int out_width) {
  Tensor out = rdn::bilinear_upsample(values_[x], out_height, out_width);
  const int in_h = values_[x].height;
  const int in_w = values_[x].width;
  Node node;
  node.backward = [x, in_h, in_w](GradTape& t, int self) {
    Tensor gin = bilinear_upsample_backward(in_h, in_w, t.grads_[self]);
    Tensor& dst = t.grad_buffer(x);
    for (std::size_t i = 0; i < dst.size(); ++i) dst.data[i] += gin.data[i];
  };
  return emplace(std::move(out), std::move(node));
}

int GradTape::l2_normalize_channels(int x, double epsilon) {
  Tensor out = rdn::l2_normalize_channels(values_[x], epsilon);
  Node node;
  node.backward = [x, epsilon](GradTape& t, int self) {
    Tensor gin =
        l2_normalize_channels_backward(t.values_[x], t.grads_[self], epsilon);
    Tensor& dst = t.grad_buffer(x);
    for (std::size_t i = 0; i < dst.size(); ++i) dst.data[i] += gin.data[i];
  };
  return emplace(std::move(out), std::move(node));
}

int GradTape::concat_channels(int a, int b) {
  Tensor out = rdn::concat_channels(values_[a], values_[b]);
  Node node;
  node.backward = [a, b](GradTape& t, int self) {
    Tensor ga(t.values_[a].height, t.values_[a].width, t.values_[a].channels);
    Tensor gb(t.values_[b].height, t.values_[b].width, t.values_[b].channels);
    concat_channels_backward(t.grads_[self], ga, gb);
    Tensor& da = t.grad_buffer(a);
    for (std::size_t i = 0; i < da.size(); ++i) da.data[i] += ga.data[i];
    Tensor& db = t.grad_buffer(b);
    for (std::size_t i = 0; i < db.size(); ++i) db.data[i] += gb.data[i];
  };
  return emplace(std::move(out), std::move(node));
}

void GradTape::backward(int node, const Tensor& upstream) {
  if (node < 0 || node >= static_cast<int>(values_.size())) {
    throw ContractViolation("backward: unknown tape node");
  }
  if (!values_[node].same_shape(upstream)) {
    throw ContractViolation("backward: upstream gradient shape mismatch");
  }
  Tensor& seed = grad_buffer(node);
  for (std::size_t i = 0; i < seed.size(); ++i) {
    seed.data[i] += upstream.data[i];
  }
  for (int id = node; id >= 0; --id) {
    if (nodes_[id].backward && !grads_[id].data.empty()) {
      nodes_[id].backward(*this, id);
    }
  }
}

GradCheckReport grad_check(const std::function<double()>& forward,
                           const std::vector<ParamBlock>& params,
                           double tolerance, double step,
                           std::size_t samples_per_block,
                           unsigned long long seed) {
  GradCheckReport report;
  std::mt19937_64 rng(seed);
  for (const ParamBlock& block : params) {
    std::vector<std::size_t> probe(block.size);
    std::iota(probe.begin(), probe.end(), std::size_t{0});
    if (samples_per_block > 0 && samples_per_block < block.size) {
      std::shuffle(probe.begin(), probe.end(), rng);
      probe.resize(samples_per_block);
    }
    for (std::size_t idx : probe) {
      const double saved = block.values[idx];
      block.values[idx] = saved + step;
      const double f_plus = forward();
      block.values[idx] = saved - step;
      const double f_minus = forward();
      block.values[idx] = saved;
      if (!std::isfinite(f_plus) || !std::isfinite(f_minus)) {
        throw TrainingDivergence("non-finite forward value while probing " +
                                 block.name);
      }
      const double numeric = (f_plus - f_minus) / (2.0 * step);
      const double analytic = block.analytic_grad[idx];
      const double rel = std::abs(analytic - numeric) /
                         std::max(1e-8, std::abs(analytic) + std::abs(numeric));
      report.entries.push_back({block.name, idx, analytic, numeric, rel});
      report.max_relative_error = std::max(report.max_relative_error, rel);
      if (rel > tolerance) report.passed = false;
    }
  }
  return report;
}

}  // namespace rdn

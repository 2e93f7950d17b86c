#pragma once

#include <functional>
#include <string>
#include <vector>

#include "rdn/ops.hpp"
#include "rdn/tensor.hpp"

namespace rdn {

// Reverse-mode tape over tensor operations. Each recorded node keeps its
// forward value; backward() visits nodes in exact reverse execution order
// and accumulates gradients into parent nodes and into any ConvGrad
// registered with a convolution node. Single-owner: one forward/backward
// pass per tape, no concurrent mutation.
class GradTape {
 public:
  int input(Tensor value);
  int conv2d(int x, const ConvLayer& layer, ConvGrad* grad);
  int relu(int x);
  int avg_pool_blocks(int x, int window);
  int bilinear_upsample(int x, int out_height, int out_width);
  int l2_normalize_channels(int x, double epsilon);
  int concat_channels(int a, int b);

  const Tensor& value(int id) const { return values_.at(id); }
  const Tensor& grad(int id) const { return grads_.at(id); }

  // Seeds the given node with the upstream gradient and replays the tape
  // in reverse. May be called once per recorded forward pass.
  void backward(int node, const Tensor& upstream);

 private:
  struct Node {
    std::function<void(GradTape&, int self)> backward;
  };

  int emplace(Tensor value, Node node);
  Tensor& grad_buffer(int id);

  std::vector<Tensor> values_;
  std::vector<Tensor> grads_;
  std::vector<Node> nodes_;
};

// One named flat parameter block with its analytic gradient.
struct ParamBlock {
  std::string name;
  double* values;
  const double* analytic_grad;
  std::size_t size;
};

struct GradCheckEntry {
  std::string block;
  std::size_t index;
  double analytic;
  double numeric;
  double relative_error;
};

struct GradCheckReport {
  bool passed = true;
  double max_relative_error = 0.0;
  std::vector<GradCheckEntry> entries;
};

// Compares analytic gradients against central finite differences of
// `forward` (which must re-evaluate the scalar objective from the current
// parameter values). Probes up to `samples_per_block` entries per block,
// chosen by a seeded generator; relative error is
// |a - n| / max(1e-8, |a| + |n|).
GradCheckReport grad_check(const std::function<double()>& forward,
                           const std::vector<ParamBlock>& params,
                           double tolerance, double step = 1e-5,
                           std::size_t samples_per_block = 0,
                           unsigned long long seed = 0);

}  // namespace rdn

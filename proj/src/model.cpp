#include "rdn/model.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

namespace rdn {

RdnConfig RdnConfig::quarter() {
  RdnConfig c;
  c.fen_channels = {8, 8, 16, 16, 32, 32};
  c.branch_channels = 8;
  return c;
}

void RdnConfig::validate() const {
  for (int ch : fen_channels) {
    if (ch < 1) throw ContractViolation("fen channel counts must be positive");
  }
  for (int d : fen_dilations) {
    if (d < 1) throw ContractViolation("fen dilations must be positive");
  }
  if (fen_channels.back() % 4 != 0) {
    throw ContractViolation("last fen channel count must be divisible by 4");
  }
  if (branch_channels * 4 != fen_channels.back()) {
    throw ContractViolation("branch_channels must be last fen channels / 4");
  }
  for (std::size_t i = 0; i < spp_windows.size(); ++i) {
    if (spp_windows[i] < 1) {
      throw ContractViolation("spp windows must be >= 1");
    }
    if (i > 0 && spp_windows[i] >= spp_windows[i - 1]) {
      throw ContractViolation("spp windows must be strictly decreasing");
    }
  }
  if (epsilon <= 0.0) throw ContractViolation("epsilon must be positive");
}

RdnGrads::RdnGrads(const RdnWeights& w) {
  fen.reserve(w.fen.size());
  for (const ConvLayer& l : w.fen) fen.emplace_back(l);
  reducers.reserve(w.reducers.size());
  for (const ConvLayer& l : w.reducers) reducers.emplace_back(l);
}

void RdnGrads::zero() {
  for (ConvGrad& g : fen) g.zero();
  for (ConvGrad& g : reducers) g.zero();
}

RdnWeights init_weights(const RdnConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  RdnWeights w;
  auto fill = [&rng](ConvLayer& layer) {
    const double fan_in =
        static_cast<double>(layer.in_channels) * layer.kh * layer.kw;
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    for (double& v : layer.kernel) v = dist(rng);
    // biases stay zero
  };
  int in_c = 3;
  for (int i = 0; i < 6; ++i) {
    ConvLayer layer(config.fen_channels[i], in_c, 3, config.fen_dilations[i]);
    fill(layer);
    w.fen.push_back(std::move(layer));
    in_c = config.fen_channels[i];
  }
  for (int b = 0; b < 4; ++b) {
    ConvLayer layer(config.branch_channels, config.fen_channels.back(), 1, 1);
    fill(layer);
    w.reducers.push_back(std::move(layer));
  }
  return w;
}

Tensor fen_forward(const Tensor& image, const RdnWeights& weights,
                   const RdnConfig& config) {
  if (image.channels != 3) {
    throw ContractViolation("fen_forward expects a 3-channel image");
  }
  (void)config;
  Tensor t = image;
  for (std::size_t i = 0; i < weights.fen.size(); ++i) {
    t = conv2d(t, weights.fen[i]);
    if (i + 1 < weights.fen.size()) t = relu(t);
  }
  return t;
}

Tensor hffm_forward(const Tensor& d_low, const RdnWeights& weights,
                    const RdnConfig& config) {
  if (d_low.channels != config.fen_channels.back()) {
    throw ContractViolation("hffm_forward channel mismatch");
  }
  Tensor out;
  for (std::size_t b = 0; b < config.spp_windows.size(); ++b) {
    Tensor branch = avg_pool_blocks(d_low, config.spp_windows[b]);
    branch = relu(conv2d(branch, weights.reducers[b]));
    branch = bilinear_upsample(branch, d_low.height, d_low.width);
    out = (b == 0) ? std::move(branch) : concat_channels(out, branch);
  }
  return out;
}

DescriptorField describe(const Tensor& image, const RdnWeights& weights,
                         const RdnConfig& config) {
  Tensor d_low = fen_forward(image, weights, config);
  Tensor d_high = hffm_forward(d_low, weights, config);
  return l2_normalize_channels(concat_channels(d_low, d_high), config.epsilon);
}

RdnForwardNodes describe_on_tape(GradTape& tape, Tensor image,
                                 const RdnWeights& weights, RdnGrads* grads,
                                 const RdnConfig& config) {
  if (image.channels != 3) {
    throw ContractViolation("describe_on_tape expects a 3-channel image");
  }
  const int height = image.height;
  const int width = image.width;
  RdnForwardNodes nodes;
  nodes.image = tape.input(std::move(image));
  int t = nodes.image;
  for (std::size_t i = 0; i < weights.fen.size(); ++i) {
    t = tape.conv2d(t, weights.fen[i], grads ? &grads->fen[i] : nullptr);
    if (i + 1 < weights.fen.size()) t = tape.relu(t);
  }
  nodes.d_low = t;
  int d_high = -1;
  for (std::size_t b = 0; b < config.spp_windows.size(); ++b) {
    int branch = tape.avg_pool_blocks(nodes.d_low, config.spp_windows[b]);
    branch = tape.conv2d(branch, weights.reducers[b],
                         grads ? &grads->reducers[b] : nullptr);
    branch = tape.relu(branch);
    branch = tape.bilinear_upsample(branch, height, width);
    d_high = (b == 0) ? branch : tape.concat_channels(d_high, branch);
  }
  const int cat = tape.concat_channels(nodes.d_low, d_high);
  nodes.d_output = tape.l2_normalize_channels(cat, config.epsilon);
  return nodes;
}

std::vector<std::vector<double>> sample_descriptors(
    const DescriptorField& field, const std::vector<Keypoint>& keypoints) {
  std::vector<std::vector<double>> out;
  out.reserve(keypoints.size());
  for (std::size_t i = 0; i < keypoints.size(); ++i) {
    const Keypoint& k = keypoints[i];
    if (k.y < 0 || k.y >= field.height || k.x < 0 || k.x >= field.width) {
      throw BoundsError("keypoint " + std::to_string(i) + " at (" +
                        std::to_string(k.x) + "," + std::to_string(k.y) +
                        ") outside " + std::to_string(field.width) + "x" +
                        std::to_string(field.height) + " field");
    }
    auto px = field.pixel(k.y, k.x);
    out.emplace_back(px.begin(), px.end());
  }
  return out;
}

namespace {

constexpr char kMagic[4] = {'R', 'D', 'N', 'W'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
}

void put_f32(std::string& buf, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(buf, bits);
}

class Reader {
 public:
  Reader(const std::string& buf, std::size_t limit) : buf_(buf), limit_(limit) {}

  std::uint32_t u32() {
    if (pos_ + 4 > limit_) {
      throw DecodeError("weights file truncated at byte " +
                        std::to_string(pos_));
    }
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(
               static_cast<unsigned char>(buf_[pos_ + i]))
           << (8 * i);
    }
    pos_ += 4;
    return v;
  }

  float f32() {
    const std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }

  std::size_t pos() const { return pos_; }

 private:
  const std::string& buf_;
  std::size_t limit_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(const std::string& buf, std::size_t n) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(buf.data()),
            static_cast<uInt>(n)));
}

}  // namespace

void save_weights(const RdnWeights& weights, const std::string& path) {
  std::string buf;
  buf.append(kMagic, 4);
  put_u32(buf, kVersion);
  const std::uint32_t layer_count =
      static_cast<std::uint32_t>(weights.fen.size() + weights.reducers.size());
  put_u32(buf, layer_count);
  auto write_layer = [&buf](const ConvLayer& l) {
    put_u32(buf, static_cast<std::uint32_t>(l.out_channels));
    put_u32(buf, static_cast<std::uint32_t>(l.in_channels));
    put_u32(buf, static_cast<std::uint32_t>(l.kh));
    put_u32(buf, static_cast<std::uint32_t>(l.kw));
    put_u32(buf, static_cast<std::uint32_t>(l.dilation));
    for (double v : l.kernel) put_f32(buf, static_cast<float>(v));
    for (double v : l.bias) put_f32(buf, static_cast<float>(v));
  };
  for (const ConvLayer& l : weights.fen) write_layer(l);
  for (const ConvLayer& l : weights.reducers) write_layer(l);
  put_u32(buf, crc_of(buf, buf.size()));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("short write: " + path);
}

RdnWeights load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::string buf((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  if (buf.size() < 16) throw DecodeError("weights file too short");
  if (std::memcmp(buf.data(), kMagic, 4) != 0) {
    throw DecodeError("bad magic in weights file " + path);
  }
  const std::size_t payload = buf.size() - 4;
  Reader r(buf, payload);
  r.u32();  // magic, already checked
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw DecodeError("unsupported weights version " + std::to_string(version));
  }
  const std::uint32_t layer_count = r.u32();
  if (layer_count < 1 || layer_count > 1024) {
    throw DecodeError("implausible layer count " + std::to_string(layer_count));
  }
  RdnWeights w;
  for (std::uint32_t li = 0; li < layer_count; ++li) {
    const std::uint32_t out_c = r.u32();
    const std::uint32_t in_c = r.u32();
    const std::uint32_t kh = r.u32();
    const std::uint32_t kw = r.u32();
    const std::uint32_t dil = r.u32();
    if (out_c < 1 || in_c < 1 || kh < 1 || kw < 1 || kh != kw || dil < 1 ||
        out_c > 65536 || in_c > 65536 || kh > 15) {
      throw DecodeError("implausible layer shape in weights file");
    }
    ConvLayer layer(static_cast<int>(out_c), static_cast<int>(in_c),
                    static_cast<int>(kh), static_cast<int>(dil));
    for (double& v : layer.kernel) v = r.f32();
    for (double& v : layer.bias) v = r.f32();
    if (!std::all_of(layer.kernel.begin(), layer.kernel.end(),
                     [](double v) { return std::isfinite(v); })) {
      throw DecodeError("non-finite kernel value in weights file");
    }
    w.fen.push_back(std::move(layer));
  }
  if (r.pos() != payload) {
    throw DecodeError("trailing bytes in weights file");
  }
  std::uint32_t stored_crc = 0;
  for (int i = 0; i < 4; ++i) {
    stored_crc |= static_cast<std::uint32_t>(
                      static_cast<unsigned char>(buf[payload + i]))
                  << (8 * i);
  }
  if (stored_crc != crc_of(buf, payload)) {
    throw DecodeError("CRC mismatch in weights file " + path);
  }
  // Split: 1x1 layers at the tail are the pyramid reducers.
  std::size_t split = w.fen.size();
  while (split > 0 && w.fen[split - 1].kh == 1) --split;
  w.reducers.assign(std::make_move_iterator(w.fen.begin() + split),
                    std::make_move_iterator(w.fen.end()));
  w.fen.resize(split);
  return w;
}

void validate_weights(const RdnWeights& weights, const RdnConfig& config) {
  if (weights.fen.size() != 6 || weights.reducers.size() != 4) {
    throw DecodeError("weights layer count does not match config");
  }
  int in_c = 3;
  for (int i = 0; i < 6; ++i) {
    const ConvLayer& l = weights.fen[i];
    if (l.in_channels != in_c || l.out_channels != config.fen_channels[i] ||
        l.kh != 3 || l.dilation != config.fen_dilations[i]) {
      throw DecodeError("fen layer " + std::to_string(i) +
                        " shape does not match config");
    }
    in_c = l.out_channels;
  }
  for (int b = 0; b < 4; ++b) {
    const ConvLayer& l = weights.reducers[b];
    if (l.in_channels != config.fen_channels.back() ||
        l.out_channels != config.branch_channels || l.kh != 1) {
      throw DecodeError("reducer layer " + std::to_string(b) +
                        " shape does not match config");
    }
  }
}

RdnConfig config_from_weights(const RdnWeights& weights) {
  if (weights.fen.size() != 6 || weights.reducers.size() != 4) {
    throw DecodeError("weights do not describe a 6+4 layer network");
  }
  RdnConfig config;
  for (int i = 0; i < 6; ++i) {
    config.fen_channels[i] = weights.fen[i].out_channels;
    config.fen_dilations[i] = weights.fen[i].dilation;
  }
  config.branch_channels = weights.reducers[0].out_channels;
  try {
    config.validate();
  } catch (const Error& e) {
    throw DecodeError(std::string("weights imply an invalid config: ") +
                      e.what());
  }
  validate_weights(weights, config);
  return config;
}

DescriptorField fen_only_field(const DescriptorField& full, double epsilon) {
  if (full.channels % 2 != 0) {
    throw ContractViolation("descriptor field channel count must be even");
  }
  const int half = full.channels / 2;
  Tensor low(full.height, full.width, half);
  for (int y = 0; y < full.height; ++y) {
    for (int x = 0; x < full.width; ++x) {
      const double* src = full.data.data() + full.index(y, x, 0);
      double* dst = low.data.data() + low.index(y, x, 0);
      for (int c = 0; c < half; ++c) dst[c] = src[c];
    }
  }
  return l2_normalize_channels(low, epsilon);
}

std::vector<ParamBlock> parameter_blocks(RdnWeights& weights,
                                         const RdnGrads& grads) {
  std::vector<ParamBlock> blocks;
  for (std::size_t i = 0; i < weights.fen.size(); ++i) {
    blocks.push_back({"fen" + std::to_string(i) + ".kernel",
                      weights.fen[i].kernel.data(),
                      grads.fen[i].kernel.data(), weights.fen[i].kernel.size()});
    blocks.push_back({"fen" + std::to_string(i) + ".bias",
                      weights.fen[i].bias.data(), grads.fen[i].bias.data(),
                      weights.fen[i].bias.size()});
  }
  for (std::size_t b = 0; b < weights.reducers.size(); ++b) {
    blocks.push_back({"reducer" + std::to_string(b) + ".kernel",
                      weights.reducers[b].kernel.data(),
                      grads.reducers[b].kernel.data(),
                      weights.reducers[b].kernel.size()});
    blocks.push_back({"reducer" + std::to_string(b) + ".bias",
                      weights.reducers[b].bias.data(),
                      grads.reducers[b].bias.data(),
                      weights.reducers[b].bias.size()});
  }
  return blocks;
}

}  // namespace rdn

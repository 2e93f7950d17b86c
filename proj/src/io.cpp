#include "rdn/io.hpp"

#include <zlib.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace rdn {

namespace {

// Skips PNM whitespace and '#' comment lines.
int next_pnm_token(std::istream& in) {
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (!std::isspace(c)) {
      break;
    }
    c = in.get();
  }
  return c;
}

int read_pnm_int(std::istream& in) {
  int c = next_pnm_token(in);
  if (c == EOF || !std::isdigit(c)) throw DecodeError("malformed PNM header");
  int v = 0;
  while (c != EOF && std::isdigit(c)) {
    v = v * 10 + (c - '0');
    c = in.get();
  }
  return v;
}

}  // namespace

Tensor read_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image: " + path);
  char p, kind;
  in.get(p);
  in.get(kind);
  if (p != 'P' || (kind != '5' && kind != '6')) {
    throw DecodeError("unsupported image format (want binary PGM/PPM): " + path);
  }
  const int width = read_pnm_int(in);
  const int height = read_pnm_int(in);
  const int maxval = read_pnm_int(in);
  if (width < 1 || height < 1 || maxval != 255) {
    throw DecodeError("unsupported PNM header in " + path);
  }
  const int file_channels = kind == '6' ? 3 : 1;
  std::vector<unsigned char> raw(static_cast<std::size_t>(width) * height *
                                 file_channels);
  in.read(reinterpret_cast<char*>(raw.data()),
          static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
    throw DecodeError("truncated image data in " + path);
  }
  Tensor img(height, width, 3);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t base =
          (static_cast<std::size_t>(y) * width + x) * file_channels;
      for (int c = 0; c < 3; ++c) {
        const unsigned char byte = raw[base + (file_channels == 3 ? c : 0)];
        img.at(y, x, c) = byte / 255.0;
      }
    }
  }
  return img;
}

void write_image(const Tensor& image, const std::string& path) {
  if (image.channels != 1 && image.channels != 3) {
    throw ContractViolation("write_image expects 1 or 3 channels");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << (image.channels == 3 ? "P6" : "P5") << "\n"
      << image.width << " " << image.height << "\n255\n";
  std::vector<unsigned char> raw;
  raw.reserve(image.size());
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < image.channels; ++c) {
        const double v = std::clamp(image.at(y, x, c), 0.0, 1.0);
        raw.push_back(static_cast<unsigned char>(std::lround(v * 255.0)));
      }
    }
  }
  out.write(reinterpret_cast<const char*>(raw.data()),
            static_cast<std::streamsize>(raw.size()));
  if (!out) throw IoError("short write: " + path);
}

namespace {

constexpr char kDescMagic[4] = {'R', 'D', 'N', 'D'};
constexpr std::uint32_t kDescVersion = 1;

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

std::uint32_t crc_of(const std::string& buf, std::size_t n) {
  return static_cast<std::uint32_t>(crc32(
      0L, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(n)));
}

std::uint32_t get_u32(const std::string& buf, std::size_t& pos,
                      std::size_t limit) {
  if (pos + 4 > limit) throw DecodeError("descriptor file truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i]))
         << (8 * i);
  }
  pos += 4;
  return v;
}

float get_f32(const std::string& buf, std::size_t& pos, std::size_t limit) {
  const std::uint32_t bits = get_u32(buf, pos, limit);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace

void write_descriptors(const SparseDescriptors& d, const std::string& path) {
  if (d.keypoints.size() != d.descriptors.size()) {
    throw ContractViolation("keypoint/descriptor count mismatch");
  }
  const std::size_t dim = d.descriptors.empty() ? 0 : d.descriptors[0].size();
  std::string buf;
  buf.append(kDescMagic, 4);
  put_u32(buf, kDescVersion);
  put_u32(buf, static_cast<std::uint32_t>(d.keypoints.size()));
  put_u32(buf, static_cast<std::uint32_t>(dim));
  for (std::size_t i = 0; i < d.keypoints.size(); ++i) {
    if (d.descriptors[i].size() != dim) {
      throw ContractViolation("ragged descriptor list");
    }
    put_f32(buf, static_cast<float>(d.keypoints[i].x));
    put_f32(buf, static_cast<float>(d.keypoints[i].y));
    for (double v : d.descriptors[i]) put_f32(buf, static_cast<float>(v));
  }
  put_u32(buf, crc_of(buf, buf.size()));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("short write: " + path);
}

SparseDescriptors read_descriptors(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::string buf((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  if (buf.size() < 20) throw DecodeError("descriptor file too short");
  if (std::memcmp(buf.data(), kDescMagic, 4) != 0) {
    throw DecodeError("bad magic in descriptor file " + path);
  }
  const std::size_t payload = buf.size() - 4;
  std::size_t pos = 4;
  const std::uint32_t version = get_u32(buf, pos, payload);
  if (version != kDescVersion) {
    throw DecodeError("unsupported descriptor file version");
  }
  const std::uint32_t count = get_u32(buf, pos, payload);
  const std::uint32_t dim = get_u32(buf, pos, payload);
  SparseDescriptors d;
  for (std::uint32_t i = 0; i < count; ++i) {
    Keypoint k;
    k.x = static_cast<int>(get_f32(buf, pos, payload));
    k.y = static_cast<int>(get_f32(buf, pos, payload));
    std::vector<double> vec(dim);
    for (std::uint32_t j = 0; j < dim; ++j) vec[j] = get_f32(buf, pos, payload);
    d.keypoints.push_back(k);
    d.descriptors.push_back(std::move(vec));
  }
  if (pos != payload) throw DecodeError("trailing bytes in descriptor file");
  std::size_t crc_pos = payload;
  const std::uint32_t stored = get_u32(buf, crc_pos, buf.size());
  if (stored != crc_of(buf, payload)) {
    throw DecodeError("CRC mismatch in descriptor file " + path);
  }
  return d;
}

void write_matches(const std::vector<Match>& matches,
                   const std::vector<Keypoint>& kps_a,
                   const std::vector<Keypoint>& kps_b,
                   const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  char line[256];
  for (const Match& m : matches) {
    const Keypoint& a = kps_a.at(m.idx_a);
    const Keypoint& b = kps_b.at(m.idx_b);
    std::snprintf(line, sizeof line,
                  "%d\t%d\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\n", m.idx_a, m.idx_b,
                  static_cast<double>(a.x), static_cast<double>(a.y),
                  static_cast<double>(b.x), static_cast<double>(b.y),
                  m.distance);
    out << line;
  }
  if (!out) throw IoError("short write: " + path);
}

void write_model(const PlanarModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << (model.kind == ModelKind::kHomography ? "homography" : "fundamental")
      << "\n";
  char num[64];
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      std::snprintf(num, sizeof num, "%.12g", model.m[r * 3 + c]);
      out << num << (c == 2 ? "\n" : " ");
    }
  }
  if (!out) throw IoError("short write: " + path);
}

PlanarModel read_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::string kind;
  in >> kind;
  PlanarModel model;
  if (kind == "homography") {
    model.kind = ModelKind::kHomography;
  } else if (kind == "fundamental") {
    model.kind = ModelKind::kFundamental;
  } else {
    throw DecodeError("unknown model kind '" + kind + "' in " + path);
  }
  for (double& v : model.m) {
    if (!(in >> v)) throw DecodeError("malformed model file " + path);
  }
  return model;
}

void write_correspondences(const std::vector<Correspondence>& corrs,
                           const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  for (const Correspondence& c : corrs) {
    out << c.p1.x << '\t' << c.p1.y << '\t' << c.p2.x << '\t' << c.p2.y
        << '\n';
  }
  if (!out) throw IoError("short write: " + path);
}

std::vector<Correspondence> read_correspondences(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::vector<Correspondence> corrs;
  Correspondence c;
  while (in >> c.p1.x >> c.p1.y >> c.p2.x >> c.p2.y) corrs.push_back(c);
  return corrs;
}

void write_manifest(const std::vector<ManifestEntry>& entries,
                    const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  for (const ManifestEntry& e : entries) {
    out << e.image1 << '\t' << e.image2 << '\t' << e.model << '\t' << e.corrs
        << '\n';
  }
  if (!out) throw IoError("short write: " + path);
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path);
  const std::filesystem::path base = std::filesystem::path(path).parent_path();
  auto resolve = [&base](const std::string& p) {
    return std::filesystem::path(p).is_absolute() ? p : (base / p).string();
  };
  std::vector<ManifestEntry> entries;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    ManifestEntry e;
    if (!std::getline(ls, e.image1, '\t') ||
        !std::getline(ls, e.image2, '\t') || !std::getline(ls, e.model, '\t') ||
        !std::getline(ls, e.corrs)) {
      throw DecodeError("malformed manifest line: " + line);
    }
    e.image1 = resolve(e.image1);
    e.image2 = resolve(e.image2);
    e.model = resolve(e.model);
    e.corrs = resolve(e.corrs);
    entries.push_back(std::move(e));
  }
  return entries;
}

void write_loss_curve(const std::vector<EpochStat>& curve,
                      const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  char line[128];
  for (const EpochStat& e : curve) {
    std::snprintf(line, sizeof line, "%d\t%.9g\t%.9g\n", e.epoch, e.mean_loss,
                  e.lr);
    out << line;
  }
  if (!out) throw IoError("short write: " + path);
}

}  // namespace rdn

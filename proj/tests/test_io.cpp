#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "rdn/io.hpp"
#include "rdn/runconfig.hpp"
#include "rdn/synth.hpp"

using namespace rdn;
namespace fs = std::filesystem;

namespace {

fs::path tmp(const char* name) { return fs::temp_directory_path() / name; }

std::vector<char> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& p, const std::vector<char>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("PPM roundtrip is exact at 8-bit quantization") {
  const Tensor img = random_texture(20, 30, 1);
  const fs::path p = tmp("rdn_io_test.ppm");
  write_image(img, p.string());
  const Tensor back = read_image(p.string());
  CHECK(back.height == 20);
  CHECK(back.width == 30);
  CHECK(back.channels == 3);
  for (std::size_t i = 0; i < img.size(); ++i) {
    // one quantization step of slack
    CHECK(std::abs(back.data[i] - img.data[i]) <= 0.5 / 255.0 + 1e-12);
  }
  // a second roundtrip is bit-stable
  const fs::path p2 = tmp("rdn_io_test2.ppm");
  write_image(back, p2.string());
  CHECK(read_image(p2.string()).data == back.data);
  fs::remove(p);
  fs::remove(p2);
}

TEST_CASE("PGM grayscale reads replicate to 3 channels") {
  Tensor gray(4, 5, 1);
  for (std::size_t i = 0; i < gray.size(); ++i) {
    gray.data[i] = static_cast<double>(i) / gray.size();
  }
  const fs::path p = tmp("rdn_io_test.pgm");
  write_image(gray, p.string());
  const Tensor back = read_image(p.string());
  CHECK(back.channels == 3);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 5; ++x) {
      CHECK(back.at(y, x, 0) == back.at(y, x, 1));
      CHECK(back.at(y, x, 1) == back.at(y, x, 2));
      CHECK(std::abs(back.at(y, x, 0) - gray.at(y, x, 0)) <=
            0.5 / 255.0 + 1e-12);
    }
  }
  fs::remove(p);
}

TEST_CASE("image decode errors: missing file, bad magic, truncation") {
  CHECK_THROWS_AS(read_image("/nonexistent/rdn.pgm"), IoError);
  const fs::path p = tmp("rdn_io_bad.pgm");
  spit(p, {'P', '4', '\n', '1', ' ', '1', '\n'});
  CHECK_THROWS_AS(read_image(p.string()), DecodeError);
  spit(p, {'P', '5', '\n', '4', ' ', '4', '\n', '2', '5', '5', '\n', 'a'});
  CHECK_THROWS_AS(read_image(p.string()), DecodeError);
  fs::remove(p);
}

TEST_CASE("sparse descriptor file roundtrip and corruption detection") {
  SparseDescriptors d;
  d.keypoints = {{16, 16}, {24, 40}};
  d.descriptors = {{0.25, -0.5, 1.0}, {0.125, 0.375, -0.75}};
  const fs::path p = tmp("rdn_io_test.rdnd");
  write_descriptors(d, p.string());
  const SparseDescriptors back = read_descriptors(p.string());
  REQUIRE(back.keypoints.size() == 2);
  CHECK(back.keypoints == d.keypoints);
  // the chosen values are exactly representable as f32
  CHECK(back.descriptors == d.descriptors);

  auto bytes = slurp(p);
  SUBCASE("payload flip") {
    bytes[bytes.size() - 6] ^= 0x01;
    spit(p, bytes);
    CHECK_THROWS_AS(read_descriptors(p.string()), DecodeError);
  }
  SUBCASE("truncation") {
    bytes.resize(bytes.size() - 9);
    spit(p, bytes);
    CHECK_THROWS_AS(read_descriptors(p.string()), DecodeError);
  }
  SUBCASE("bad magic") {
    bytes[1] = 'X';
    spit(p, bytes);
    CHECK_THROWS_AS(read_descriptors(p.string()), DecodeError);
  }
  fs::remove(p);
}

TEST_CASE("model file preserves the matrix to read-back precision") {
  PlanarModel m;
  m.m = Mat3{0.123456789012, -0.5, 1e-7, 2.0, 0.333333333333, -4.25,
             1e-4, 0.0, 0.987654321098};
  m.kind = ModelKind::kFundamental;
  const fs::path p = tmp("rdn_io_test.model");
  write_model(m, p.string());
  const PlanarModel back = read_model(p.string());
  CHECK(back.kind == ModelKind::kFundamental);
  for (int i = 0; i < 9; ++i) {
    CHECK(back.m[i] == doctest::Approx(m.m[i]).epsilon(1e-11));
  }
  m.kind = ModelKind::kHomography;
  write_model(m, p.string());
  CHECK(read_model(p.string()).kind == ModelKind::kHomography);

  spit(p, {'j', 'u', 'n', 'k', '\n'});
  CHECK_THROWS_AS(read_model(p.string()), DecodeError);
  fs::remove(p);
}

TEST_CASE("correspondence file roundtrip") {
  const std::vector<Correspondence> corrs = {{{16, 16}, {18, 15}},
                                             {{24, 32}, {20, 36}}};
  const fs::path p = tmp("rdn_io_test.corr");
  write_correspondences(corrs, p.string());
  const auto back = read_correspondences(p.string());
  REQUIRE(back.size() == 2);
  CHECK(back[0].p1 == corrs[0].p1);
  CHECK(back[0].p2 == corrs[0].p2);
  CHECK(back[1].p1 == corrs[1].p1);
  CHECK(back[1].p2 == corrs[1].p2);
  fs::remove(p);
}

TEST_CASE("manifest entries resolve relative to the manifest directory") {
  const fs::path dir = tmp("rdn_io_manifest_dir");
  fs::create_directories(dir);
  write_manifest({{"a.ppm", "b.ppm", "m.model", "c.corr"}},
                 (dir / "manifest.txt").string());
  const auto entries = read_manifest((dir / "manifest.txt").string());
  REQUIRE(entries.size() == 1);
  CHECK(entries[0].image1 == (dir / "a.ppm").string());
  CHECK(entries[0].corrs == (dir / "c.corr").string());
  // absolute paths pass through untouched
  write_manifest({{"/abs/a.ppm", "/abs/b.ppm", "/abs/m", "/abs/c"}},
                 (dir / "manifest.txt").string());
  CHECK(read_manifest((dir / "manifest.txt").string())[0].image1 ==
        "/abs/a.ppm");
  fs::remove_all(dir);
}

TEST_CASE("loss curve format: one line per epoch") {
  const std::vector<EpochStat> curve = {{0, 1.5, 1e-3}, {1, 0.75, 1e-3}};
  const fs::path p = tmp("rdn_io_test.curve");
  write_loss_curve(curve, p.string());
  std::ifstream in(p);
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) {
    if (!line.empty()) ++lines;
  }
  CHECK(lines == 2);
  fs::remove(p);
}

TEST_CASE("match file is written with fixed six-decimal fields") {
  const std::vector<Keypoint> ka = {{16, 16}};
  const std::vector<Keypoint> kb = {{18, 15}};
  const fs::path p = tmp("rdn_io_test.match");
  write_matches({{0, 0, 0.5}}, ka, kb, p.string());
  std::ifstream in(p);
  std::string line;
  REQUIRE(std::getline(in, line));
  CHECK(line.find("0.500000") != std::string::npos);
  fs::remove(p);
}

TEST_CASE("RunConfig: precedence flags > environment > file") {
  const fs::path p = tmp("rdn_io_test.conf");
  {
    std::ofstream out(p);
    out << "# comment line\n";
    out << "seed = 1\n";
    out << "epochs = 5\n";
    out << "lr = 0.25\n";
  }
  // no overrides: file wins
  unsetenv("RDN_SEED");
  unsetenv("RDN_EPOCHS");
  unsetenv("RDN_LR");
  RunConfig file_only = RunConfig::load(p.string());
  CHECK(file_only.get_int("seed", 0) == 1);
  CHECK(file_only.get_int("epochs", 0) == 5);
  CHECK(file_only.get_double("lr", 0.0) == 0.25);
  CHECK(file_only.get_int("stride", 8) == 8);  // fallback for absent keys

  // environment overrides the file
  setenv("RDN_SEED", "2", 1);
  RunConfig with_env = RunConfig::load(p.string());
  CHECK(with_env.get_int("seed", 0) == 2);
  CHECK(with_env.get_int("epochs", 0) == 5);

  // flags override everything
  with_env.set_flag("seed", "3");
  CHECK(with_env.get_int("seed", 0) == 3);
  unsetenv("RDN_SEED");

  CHECK(RunConfig::known_key("seed"));
  CHECK_FALSE(RunConfig::known_key("bogus"));
  CHECK_THROWS_AS(with_env.set_flag("bogus", "1"), ConfigError);

  {
    std::ofstream out(p);
    out << "unknown_key = 1\n";
  }
  CHECK_THROWS_AS(RunConfig::load(p.string()), ConfigError);
  {
    std::ofstream out(p);
    out << "seed = notanumber\n";
  }
  RunConfig bad = RunConfig::load(p.string());
  CHECK_THROWS_AS(bad.get_int("seed", 0), ConfigError);
  fs::remove(p);

  CHECK_THROWS_AS(RunConfig::load("/nonexistent/rdn.conf"), IoError);
}

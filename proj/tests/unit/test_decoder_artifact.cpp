#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <iterator>

#include "fixtures.hpp"
#include "sae/decoder_artifact.hpp"
#include "sae/error.hpp"

using namespace sae;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  out << bytes;
}

ErrorKind load_error(const std::string& path) {
  try {
    load_decoder(path);
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::Parse;
}

ad::Tensor random_z(std::size_t rows, std::size_t cols, Rng& rng) {
  ad::Tensor z(rows, cols);
  for (double& v : z.values()) v = standard_normal(rng);
  return z;
}

}  // namespace

TEST_CASE("save/load gives bit-identical decodes") {
  const RegionGraph g = RegionGraph::lattice(3, 4);
  const auto dec = testing::random_decoder(g, TrainingLayout::Univariate, 1, 5);
  const std::string path = "decoder_roundtrip.dec";
  save_decoder(*dec, path);
  const Decoder back = load_decoder(path);
  CHECK(back.w1() == dec->w1());
  CHECK(back.wout() == dec->wout());
  CHECK(back.metadata().graph_hash == g.content_hash());
  CHECK(back.metadata().layout == TrainingLayout::Univariate);
  Rng rng(1);
  const ad::Tensor z = random_z(100, dec->latent_dim(), rng);
  CHECK(back.decode(z) == dec->decode(z));
  std::remove(path.c_str());
}

TEST_CASE("corruption and version checks") {
  const RegionGraph g = RegionGraph::lattice(2, 3);
  const auto dec = testing::random_decoder(g, TrainingLayout::Vectorized, 2, 6);
  const std::string path = "decoder_corrupt.dec";
  save_decoder(*dec, path);
  const std::string good = slurp(path);

  std::string flipped = good;
  flipped[flipped.size() - 3] ^= 0x10;
  spit(path, flipped);
  CHECK(load_error(path) == ErrorKind::CorruptFile);

  spit(path, good.substr(0, good.size() - 8));
  CHECK(load_error(path) == ErrorKind::CorruptFile);

  std::string bumped = good;
  const auto at = bumped.find("\"version\":1");
  REQUIRE(at != std::string::npos);
  bumped.replace(at, 11, "\"version\":9");
  spit(path, bumped);
  CHECK(load_error(path) == ErrorKind::VersionUnsupported);

  spit(path, "");
  CHECK(load_error(path) == ErrorKind::CorruptFile);
  std::remove(path.c_str());
  CHECK(load_error(path) == ErrorKind::Io);
}

TEST_CASE("compatibility checks") {
  const RegionGraph g = RegionGraph::lattice(3, 3);
  const auto dec = testing::random_decoder(g, TrainingLayout::Univariate, 1, 7);
  CHECK_NOTHROW(dec->check_compatible(g, TrainingLayout::Univariate, 1));
  try {
    dec->check_compatible(RegionGraph::lattice(3, 4), TrainingLayout::Univariate, 1);
    FAIL("expected HashMismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::HashMismatch);
  }
  CHECK_THROWS_AS(dec->check_compatible(g, TrainingLayout::Vectorized, 2), Error);
}

TEST_CASE("forward/backward match finite differences") {
  const RegionGraph g = RegionGraph::lattice(2, 2);
  const auto dec = testing::random_decoder(g, TrainingLayout::Univariate, 1, 8);
  Rng rng(2);
  const ad::Tensor z = random_z(2, dec->latent_dim(), rng);
  const ad::Tensor seed = random_z(2, dec->output_dim(), rng);
  const auto pass = dec->forward(z);
  const ad::Tensor grad = dec->backward(pass, seed);
  auto f = [&](const ad::Tensor& zz) {
    const ad::Tensor out = dec->decode(zz);
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += out.data()[i] * seed.data()[i];
    return s;
  };
  for (std::size_t i = 0; i < z.size(); ++i) {
    ad::Tensor zp = z, zm = z;
    zp.data()[i] += 1e-6;
    zm.data()[i] -= 1e-6;
    CHECK(grad.data()[i] == doctest::Approx((f(zp) - f(zm)) / 2e-6).epsilon(1e-6));
  }
  const ad::TensorView v = pass.value();
  const ad::Tensor direct = dec->decode(z);
  for (std::size_t i = 0; i < direct.size(); ++i) CHECK(v.data[i] == direct.data()[i]);
}

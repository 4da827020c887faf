#include "sae/decoder_artifact.hpp"

#include <cstring>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "sae/error.hpp"
#include "sae/hashing.hpp"
#include "sae/vae.hpp"
#include "vae_internal.hpp"

namespace sae {
namespace {

constexpr int kDecoderVersion = 1;

struct DecoderGraph {
  ad::Graph graph;
  ad::Expr out;
};

DecoderGraph build(std::size_t batch, std::size_t latent, std::size_t hidden, std::size_t output) {
  DecoderGraph dg;
  const ad::Expr z = dg.graph.input("z", batch, latent);
  dg.out = detail::decoder_expr(dg.graph, z,
                                detail::decoder_inputs(dg.graph, latent, hidden, output));
  return dg;
}

void append(std::string& blob, const ad::Tensor& t) {
  const auto* p = reinterpret_cast<const char*>(t.data());
  blob.append(p, t.size() * sizeof(double));
}

ad::Tensor take(const std::string& blob, std::size_t& offset, std::size_t rows, std::size_t cols) {
  ad::Tensor t(rows, cols);
  const std::size_t bytes = t.size() * sizeof(double);
  if (offset + bytes > blob.size()) throw Error(ErrorKind::CorruptFile, "decoder payload truncated");
  std::memcpy(t.data(), blob.data() + offset, bytes);
  offset += bytes;
  return t;
}

}  // namespace

Decoder::Decoder(ad::Tensor w1, ad::Tensor b1, ad::Tensor wout, ad::Tensor bout,
                 DecoderMetadata meta)
    : w1_(std::move(w1)), b1_(std::move(b1)), wout_(std::move(wout)), bout_(std::move(bout)),
      meta_(std::move(meta)) {
  if (b1_.rows() != 1 || b1_.cols() != w1_.cols() || wout_.rows() != w1_.cols() ||
      bout_.rows() != 1 || bout_.cols() != wout_.cols()) {
    throw Error(ErrorKind::ShapeMismatch, "inconsistent decoder weight shapes");
  }
}

Decoder Decoder::from_model(const VaeModel& model, DecoderMetadata meta) {
  const auto& p = model.parameters();
  return Decoder(p.at("dec_w1"), p.at("dec_b1"), p.at("dec_wout"), p.at("dec_bout"),
                 std::move(meta));
}

ad::Tensor Decoder::decode(const ad::Tensor& z) const {
  const Pass pass = forward(z);
  const ad::TensorView v = pass.value();
  return ad::Tensor(v.rows, v.cols, std::vector<double>(v.data, v.data + v.rows * v.cols));
}

Decoder::Pass Decoder::forward(ad::TensorView z) const {
  if (z.cols != latent_dim()) {
    throw Error(ErrorKind::ShapeMismatch, "decoder expects " + std::to_string(latent_dim()) +
                                              " latent columns, got " + std::to_string(z.cols));
  }
  DecoderGraph dg = build(z.rows, latent_dim(), hidden_dim(), output_dim());
  ad::Bindings b;
  b.bind("z", z).bind("dec_w1", w1_).bind("dec_b1", b1_).bind("dec_wout", wout_).bind("dec_bout", bout_);
  ad::Graph::Tape tape = dg.graph.record(dg.out, b);
  return Pass(std::move(dg.graph), std::move(tape));
}

ad::Tensor Decoder::backward(const Pass& pass, const ad::Tensor& seed) const {
  static const std::string wrt[] = {"z"};
  auto grads = pass.graph_.pullback(pass.tape_, seed, wrt);
  return std::move(grads.at("z"));
}

void Decoder::check_compatible(const RegionGraph& graph, TrainingLayout layout,
                               std::size_t k) const {
  if (meta_.graph_hash != graph.content_hash()) {
    throw Error(ErrorKind::HashMismatch, "decoder was trained on graph " + meta_.graph_hash +
                                             ", not " + graph.content_hash());
  }
  if (meta_.layout != layout) {
    throw Error(ErrorKind::InvalidConfig, "decoder layout is " + to_string(meta_.layout) +
                                              ", model needs " + to_string(layout));
  }
  const std::size_t want = layout == TrainingLayout::Vectorized ? graph.size() * k : graph.size();
  if (output_dim() != want || (layout == TrainingLayout::Vectorized && meta_.k != k)) {
    throw Error(ErrorKind::InvalidConfig, "decoder output dimension " +
                                              std::to_string(output_dim()) + " does not match " +
                                              std::to_string(want));
  }
}

void save_decoder(const Decoder& decoder, const std::string& path) {
  std::string blob;
  append(blob, decoder.w1());
  append(blob, decoder.b1());
  append(blob, decoder.wout());
  append(blob, decoder.bout());
  const auto& m = decoder.metadata();
  const nlohmann::json header = {
      {"format", "sae-decoder"},
      {"version", kDecoderVersion},
      {"latent_dim", decoder.latent_dim()},
      {"hidden_dim", decoder.hidden_dim()},
      {"output_dim", decoder.output_dim()},
      {"layout", to_string(m.layout)},
      {"n_regions", m.n_regions},
      {"k", m.k},
      {"graph_sha256", m.graph_hash},
      {"training_seed", m.training_seed},
      {"n_samples", m.n_samples},
      {"final_elbo", m.final_elbo},
      {"payload_bytes", blob.size()},
      {"crc32", crc32({reinterpret_cast<const unsigned char*>(blob.data()), blob.size()})}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path);
  out << header.dump() << '\n';
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path);
}

Decoder load_decoder(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path);
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::CorruptFile, path + " is empty");
  const auto header = nlohmann::json::parse(line, nullptr, false);
  if (header.is_discarded() || !header.is_object() || header.value("format", "") != "sae-decoder") {
    throw Error(ErrorKind::CorruptFile, path + " has no decoder header");
  }
  const int version = header.value("version", -1);
  if (version != kDecoderVersion) {
    throw Error(ErrorKind::VersionUnsupported, "decoder version " + std::to_string(version));
  }
  try {
    const auto latent = header.at("latent_dim").get<std::size_t>();
    const auto hidden = header.at("hidden_dim").get<std::size_t>();
    const auto output = header.at("output_dim").get<std::size_t>();
    const auto bytes = header.at("payload_bytes").get<std::size_t>();
    std::string blob(bytes, '\0');
    in.read(blob.data(), static_cast<std::streamsize>(bytes));
    if (static_cast<std::size_t>(in.gcount()) != bytes) {
      throw Error(ErrorKind::CorruptFile, "decoder payload truncated");
    }
    const auto crc = crc32({reinterpret_cast<const unsigned char*>(blob.data()), blob.size()});
    if (crc != header.at("crc32").get<std::uint32_t>()) {
      throw Error(ErrorKind::CorruptFile, "decoder checksum mismatch in " + path);
    }
    DecoderMetadata meta;
    meta.graph_hash = header.at("graph_sha256").get<std::string>();
    meta.layout = parse_layout(header.at("layout").get<std::string>());
    meta.n_regions = header.at("n_regions").get<std::size_t>();
    meta.k = header.at("k").get<std::size_t>();
    meta.training_seed = header.at("training_seed").get<std::uint64_t>();
    meta.n_samples = header.at("n_samples").get<std::size_t>();
    meta.final_elbo = header.at("final_elbo").get<double>();
    std::size_t offset = 0;
    ad::Tensor w1 = take(blob, offset, latent, hidden);
    ad::Tensor b1 = take(blob, offset, 1, hidden);
    ad::Tensor wout = take(blob, offset, hidden, output);
    ad::Tensor bout = take(blob, offset, 1, output);
    if (offset != blob.size()) throw Error(ErrorKind::CorruptFile, "decoder payload size mismatch");
    return Decoder(std::move(w1), std::move(b1), std::move(wout), std::move(bout), std::move(meta));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::CorruptFile, std::string("bad decoder header: ") + e.what());
  }
}

}  // namespace sae

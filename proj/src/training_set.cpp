#include <fstream>
#include <json.hpp>

#include "sae/binary_io.hpp"
#include "sae/error.hpp"
#include "sae/spatial_priors.hpp"

namespace sae {
namespace {
constexpr char kMagic[8] = {'S', 'A', 'E', 'T', 'R', 'A', 'I', 'N'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

void save_training_set(const TrainingSet& set, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path);
  out.write(kMagic, sizeof(kMagic));
  io::write<std::uint32_t>(out, kVersion);
  io::write<std::uint8_t>(out, static_cast<std::uint8_t>(set.layout));
  io::write<std::uint64_t>(out, set.n_regions);
  io::write<std::uint64_t>(out, set.k);
  io::write<std::uint64_t>(out, set.n_samples());
  io::write_f64s(out, set.samples.data(), static_cast<std::size_t>(set.samples.size()));
  io::write_f64s(out, set.rho.data(), set.rho.size());
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path);

  nlohmann::json meta = {{"graph_sha256", set.graph_hash},
                         {"seed", set.seed},
                         {"layout", to_string(set.layout)},
                         {"n_regions", set.n_regions},
                         {"k", set.k},
                         {"n_samples", set.n_samples()}};
  std::ofstream side(path + ".json");
  side << meta.dump(2) << '\n';
}

TrainingSet load_training_set(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(magic, magic + 8, kMagic)) {
    throw Error(ErrorKind::CorruptFile, path + " is not a training-set file");
  }
  const auto version = io::read<std::uint32_t>(in);
  if (version != kVersion) {
    throw Error(ErrorKind::VersionUnsupported, "training-set version " + std::to_string(version));
  }
  TrainingSet set;
  const auto layout = io::read<std::uint8_t>(in);
  if (layout > 1) throw Error(ErrorKind::CorruptFile, "bad layout tag");
  set.layout = static_cast<TrainingLayout>(layout);
  set.n_regions = io::read<std::uint64_t>(in);
  set.k = io::read<std::uint64_t>(in);
  const auto n_samples = io::read<std::uint64_t>(in);
  set.samples.resize(static_cast<Eigen::Index>(n_samples), static_cast<Eigen::Index>(set.dim()));
  io::read_f64s(in, set.samples.data(), static_cast<std::size_t>(set.samples.size()));
  set.rho.resize(n_samples);
  io::read_f64s(in, set.rho.data(), set.rho.size());

  std::ifstream side(path + ".json");
  if (side) {
    const auto meta = nlohmann::json::parse(side, nullptr, false);
    if (!meta.is_discarded()) {
      set.graph_hash = meta.value("graph_sha256", std::string{});
      set.seed = meta.value("seed", std::uint64_t{0});
    }
  }
  return set;
}

}  // namespace sae

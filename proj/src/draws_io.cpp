#include "sae/draws_io.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>

#include "sae/binary_io.hpp"
#include "sae/error.hpp"

namespace sae {
namespace {
constexpr char kMagic[8] = {'S', 'A', 'E', 'D', 'R', 'A', 'W', 'S'};
constexpr std::uint32_t kVersion = 1;

nlohmann::json number_or_null(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}
}  // namespace

void save_draws(const PosteriorDraws& draws, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path);
  out.write(kMagic, sizeof(kMagic));
  io::write<std::uint32_t>(out, kVersion);
  io::write<std::uint64_t>(out, draws.n_chains);
  io::write<std::uint64_t>(out, draws.n_kept);
  io::write<std::uint64_t>(out, draws.dim);
  io::write<std::uint64_t>(out, draws.blocks.size());
  for (const auto& b : draws.blocks) {
    io::write_string(out, b.name);
    io::write<std::uint64_t>(out, b.offset);
    io::write<std::uint64_t>(out, b.size);
  }
  for (std::size_t c = 0; c < draws.n_chains; ++c) {
    io::write<double>(out, c < draws.acceptance.size() ? draws.acceptance[c] : 0.0);
    io::write<double>(out, c < draws.step_size.size() ? draws.step_size[c] : 0.0);
    io::write<std::uint64_t>(out, c < draws.divergences.size() ? draws.divergences[c] : 0);
    io::write<std::uint64_t>(out, c < draws.leapfrog_steps.size() ? draws.leapfrog_steps[c] : 0);
  }
  std::vector<double> column(draws.n_chains * draws.n_kept);
  for (std::size_t j = 0; j < draws.dim; ++j) {
    for (std::size_t c = 0; c < draws.n_chains; ++c) {
      for (std::size_t t = 0; t < draws.n_kept; ++t) column[c * draws.n_kept + t] = draws.value(c, t, j);
    }
    io::write_f64s(out, column.data(), column.size());
  }
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path);
}

PosteriorDraws load_draws(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(magic, magic + 8, kMagic)) {
    throw Error(ErrorKind::CorruptFile, path + " is not a draws file");
  }
  const auto version = io::read<std::uint32_t>(in);
  if (version != kVersion) {
    throw Error(ErrorKind::VersionUnsupported, "draws version " + std::to_string(version));
  }
  PosteriorDraws d;
  d.n_chains = io::read<std::uint64_t>(in);
  d.n_kept = io::read<std::uint64_t>(in);
  d.dim = io::read<std::uint64_t>(in);
  const auto n_blocks = io::read<std::uint64_t>(in);
  for (std::uint64_t b = 0; b < n_blocks; ++b) {
    ParameterBlock blk;
    blk.name = io::read_string(in);
    blk.offset = io::read<std::uint64_t>(in);
    blk.size = io::read<std::uint64_t>(in);
    if (blk.offset + blk.size > d.dim) throw Error(ErrorKind::CorruptFile, "block out of range");
    d.blocks.push_back(std::move(blk));
  }
  for (std::size_t c = 0; c < d.n_chains; ++c) {
    d.acceptance.push_back(io::read<double>(in));
    d.step_size.push_back(io::read<double>(in));
    d.divergences.push_back(io::read<std::uint64_t>(in));
    d.leapfrog_steps.push_back(io::read<std::uint64_t>(in));
  }
  d.values.resize(d.n_chains * d.n_kept * d.dim);
  std::vector<double> column(d.n_chains * d.n_kept);
  for (std::size_t j = 0; j < d.dim; ++j) {
    io::read_f64s(in, column.data(), column.size());
    for (std::size_t c = 0; c < d.n_chains; ++c) {
      for (std::size_t t = 0; t < d.n_kept; ++t) {
        d.values[(c * d.n_kept + t) * d.dim + j] = column[c * d.n_kept + t];
      }
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw Error(ErrorKind::CorruptFile, "trailing bytes in " + path);
  }
  return d;
}

std::string diagnostics_json(const ChainDiagnostics& diag, const PosteriorDraws& draws) {
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : diag.blocks) {
    blocks.push_back({{"name", b.name},
                      {"max_rhat", number_or_null(b.max_rhat)},
                      {"min_ess", number_or_null(b.min_ess)},
                      {"degenerate", b.degenerate}});
  }
  nlohmann::json rhat = nlohmann::json::array(), ess = nlohmann::json::array();
  for (std::size_t i = 0; i < diag.rhat.size(); ++i) {
    rhat.push_back(number_or_null(diag.rhat[i]));
    ess.push_back(number_or_null(diag.ess[i]));
  }
  const nlohmann::json j = {{"chains", draws.n_chains},
                            {"kept_draws", draws.n_kept},
                            {"dimension", draws.dim},
                            {"mean_acceptance", diag.mean_acceptance},
                            {"divergences", diag.divergences},
                            {"step_size", draws.step_size},
                            {"acceptance", draws.acceptance},
                            {"max_rhat", number_or_null(diag.max_rhat())},
                            {"blocks", blocks},
                            {"rhat", rhat},
                            {"ess", ess}};
  return j.dump(2);
}

void save_diagnostics(const ChainDiagnostics& diag, const PosteriorDraws& draws,
                      const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path);
  out << diagnostics_json(diag, draws) << '\n';
}

}  // namespace sae

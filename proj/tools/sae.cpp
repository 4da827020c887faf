// sae: command-line front end for graph checks, prior training, model fits
// and simulation studies.

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <malloc.h>
#include <map>
#include <sstream>

#include "sae/decoder_artifact.hpp"
#include "sae/diagnostics.hpp"
#include "sae/draws_io.hpp"
#include "sae/error.hpp"
#include "sae/estimate_table.hpp"
#include "sae/fit.hpp"
#include "sae/harness.hpp"
#include "sae/region_graph.hpp"
#include "sae/spatial_priors.hpp"
#include "sae/study.hpp"
#include "sae/vae.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sae;

namespace {

constexpr int kValidationExit = 2;
constexpr int kSamplingExit = 3;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << text;
}

std::optional<std::uint64_t> env_seed() {
  const char* s = std::getenv("SAE_SEED");
  if (!s || !*s) return std::nullopt;
  try {
    return std::stoull(s);
  } catch (const std::exception&) {
    throw Error(ErrorKind::InvalidConfig, std::string("SAE_SEED is not an unsigned integer: ") + s);
  }
}

RegionGraph load_graph(const std::string& path, bool allow_components) {
  std::vector<std::string> dropped;
  RegionGraph g = RegionGraph::from_edge_list(read_file(path), {.allow_components = allow_components}, &dropped);
  if (!dropped.empty()) {
    std::cerr << "kept the largest component; dropped " << dropped.size() << " region(s):";
    for (const auto& id : dropped) std::cerr << ' ' << id;
    std::cerr << '\n';
  }
  return g;
}

int graph_check(const std::string& path) {
  const std::string text = read_file(path);
  const EdgeList el = parse_edge_list(text);
  const ComponentReport comp = components(el.ids.size(), el.edges);
  std::vector<std::size_t> degree(el.ids.size(), 0);
  for (const Edge& e : el.edges) {
    ++degree[e.first];
    ++degree[e.second];
  }
  std::map<std::size_t, std::size_t> histogram;
  json isolated = json::array();
  for (std::size_t i = 0; i < degree.size(); ++i) {
    ++histogram[degree[i]];
    if (degree[i] == 0) isolated.push_back(el.ids[i]);
  }
  json hist = json::object();
  for (auto [d, c] : histogram) hist[std::to_string(d)] = c;
  const bool valid = isolated.empty() && comp.count == 1;
  const json report = {{"n_regions", el.ids.size()},
                       {"n_edges", el.edges.size()},
                       {"degree_histogram", hist},
                       {"components", {{"count", comp.count}, {"sizes", comp.sizes}}},
                       {"isolated", isolated},
                       {"valid", valid},
                       {"sha256", valid ? RegionGraph::from_edge_list(text).content_hash() : ""}};
  std::cout << report.dump(2) << '\n';
  return valid ? 0 : kValidationExit;
}

struct TrainOptions {
  std::string graph, layout = "uni", out, training_out, trace_out;
  std::size_t k = 1, samples = 10000;
  bool allow_components = false;
  TrainConfig config;
};

int train_prior(TrainOptions o) {
  if (auto s = env_seed()) o.config.seed = *s;
  const RegionGraph graph = load_graph(o.graph, o.allow_components);
  const TrainingLayout layout = parse_layout(o.layout);
  const std::size_t k = layout == TrainingLayout::Vectorized ? o.k : 1;
  const CarStructure cs(graph);
  const TrainingSet data = generate_training_set(cs, o.samples, layout, k, o.config.seed);
  if (!o.training_out.empty()) save_training_set(data, o.training_out);
  const TrainResult r = train(VaeModel::init(data.dim(), substream_seed(o.config.seed, 3)), data, o.config);
  DecoderMetadata meta;
  meta.graph_hash = graph.content_hash();
  meta.layout = layout;
  meta.n_regions = graph.size();
  meta.k = k;
  meta.training_seed = o.config.seed;
  meta.n_samples = o.samples;
  meta.final_elbo = r.trace.elbo.empty() ? 0.0 : r.trace.elbo[r.trace.best_epoch];
  save_decoder(Decoder::from_model(r.model, meta), o.out);
  if (!o.trace_out.empty()) {
    std::ostringstream csv;
    csv << "epoch,elbo,kl,recon,elbo_ma20\n" << std::setprecision(17);
    const auto ma = r.trace.moving_average(o.config.moving_average_window);
    for (std::size_t e = 0; e < r.trace.size(); ++e) {
      csv << e << ',' << r.trace.elbo[e] << ',' << r.trace.kl[e] << ',' << r.trace.recon[e] << ','
          << ma[e] << '\n';
    }
    write_file(o.trace_out, csv.str());
  }
  std::cerr << "trained " << r.trace.size() << " epochs, best ELBO " << meta.final_elbo
            << (r.trace.stopped_early ? " (stopped early)" : "") << '\n';
  return 0;
}

struct FitOptions {
  std::string model, data, graph, decoder, config, out;
  bool allow_components = false;
};

int fit_command(const FitOptions& o) {
  json cfg = json::object();
  if (!o.config.empty()) {
    cfg = json::parse(read_file(o.config), nullptr, false);
    if (cfg.is_discarded() || !cfg.is_object()) throw Error(ErrorKind::InvalidConfig, o.config + " is not a JSON object");
  }
  ModelSpec spec;
  HmcConfig hmc;
  CsvOptions csv;
  TrainConfig training;
  std::size_t training_samples = 10000;
  try {
    spec.kind = parse_model_kind(o.model);
    spec.gmcar_phi2 = cfg.value("gmcar_phi2", spec.gmcar_phi2);
    spec.scalar_scale = cfg.value("scalar_scale", false);
    if (cfg.contains("priors")) {
      const json& p = cfg.at("priors");
      spec.priors.beta_variance = p.value("beta_variance", spec.priors.beta_variance);
      spec.priors.ig_shape = p.value("ig_shape", spec.priors.ig_shape);
      spec.priors.ig_scale = p.value("ig_scale", spec.priors.ig_scale);
      spec.priors.eta_variance = p.value("eta_variance", spec.priors.eta_variance);
      spec.priors.iw_dof = p.value("iw_dof", spec.priors.iw_dof);
    }
    const json h = cfg.value("hmc", json::object());
    hmc.n_iterations = h.value("iterations", hmc.n_iterations);
    hmc.n_burnin = h.value("burnin", hmc.n_burnin);
    hmc.n_chains = h.value("chains", hmc.n_chains);
    hmc.target_accept = h.value("target_accept", hmc.target_accept);
    hmc.max_leapfrog_steps = h.value("max_leapfrog_steps", hmc.max_leapfrog_steps);
    hmc.init_jitter = h.value("init_jitter", hmc.init_jitter);
    hmc.parallel_chains = h.value("parallel_chains", hmc.parallel_chains);
    hmc.seed = cfg.value("seed", hmc.seed);
    csv.moe_level = cfg.value("moe_level", csv.moe_level);
    csv.log_transform = cfg.value("log_transform", csv.log_transform);
    const json t = cfg.value("training", json::object());
    training_samples = t.value("samples", training_samples);
    training.epochs = t.value("epochs", training.epochs);
    training.lr_decay = t.value("lr_decay", training.lr_decay);
    training.seed = t.value("seed", training.seed);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, std::string("bad configuration value: ") + e.what());
  }
  if (auto s = env_seed()) hmc.seed = *s;
  csv.skip_unknown_regions = o.allow_components;

  const RegionGraph graph = load_graph(o.graph, o.allow_components);
  const DirectEstimateTable data = read_estimate_csv_file(o.data, graph, csv);
  spec.k = data.n_responses();
  std::shared_ptr<const Decoder> decoder;
  if (is_variational(spec.kind)) {
    if (!o.decoder.empty()) {
      decoder = std::make_shared<const Decoder>(load_decoder(o.decoder));
    } else {
      std::cerr << "no --decoder given; training one on " << o.graph << '\n';
      decoder = train_decoder(graph, spec.kind, spec.k, training_samples, training);
    }
  }
  const FhTarget target = build_target(spec, data, graph, decoder);
  const FitResult r = fit(target, hmc);
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';

  const fs::path out(o.out);
  fs::create_directories(out);
  std::ostringstream summary;
  write_theta_summary_csv(summary, summarize_theta(target, r.draws));
  write_file(out / "theta_summary.csv", summary.str());
  save_draws(r.draws, (out / "draws.bin").string());
  if (r.diagnostics) {
    save_diagnostics(*r.diagnostics, r.draws, (out / "diagnostics.json").string());
  } else {
    write_file(out / "diagnostics.json",
               json({{"chains", r.draws.n_chains}, {"kept_draws", r.draws.n_kept}, {"warnings", r.warnings}}).dump(2) + "\n");
  }
  std::cerr << to_string(spec.kind) << ": " << r.draws.n_chains << " chains x " << r.draws.n_kept
            << " draws in " << r.seconds << " s, " << r.draws.total_divergences() << " divergences\n";
  return 0;
}

int simulate_study(const std::string& config_path, const std::string& out_dir) {
  SimulationConfig cfg = load_simulation_config(config_path);
  if (auto s = env_seed()) cfg.seed = *s;
  const fs::path out(out_dir);
  fs::create_directories(out);
  std::map<ModelKind, std::shared_ptr<const Decoder>> decoders;
  const StudyTruth truth = make_truth(cfg);
  for (ModelKind m : cfg.models) {
    if (!is_variational(m) || decoders.count(m)) continue;
    if (auto it = cfg.decoder_files.find(m); it != cfg.decoder_files.end()) {
      decoders[m] = std::make_shared<const Decoder>(load_decoder(it->second));
    } else {
      std::cerr << "training decoder for " << to_string(m) << '\n';
      decoders[m] = train_decoder(truth.graph, m, static_cast<std::size_t>(truth.theta.cols()),
                                  cfg.training_samples, cfg.training);
      save_decoder(*decoders[m], (out / ("decoder_" + to_string(m) + ".bin")).string());
    }
  }
  const MetricsReport report = run_study(cfg, decoders);
  write_file(out / "metrics.json", report.to_json() + "\n");
  write_file(out / "metrics.csv", report.to_csv());
  std::cout << report.to_csv();
  return 0;
}

// Estimates: a theta summary CSV. Truth: region_id,response,truth.
int metrics_command(const std::string& estimates_path, const std::string& truth_path,
                    const std::string& scale, double alpha) {
  if (scale != "orig" && scale != "log") throw Error(ErrorKind::InvalidConfig, "--scale must be orig or log");
  auto load = [](const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot read " + path);
    std::string line;
    std::getline(in, line);
    const auto header = split_csv_line(line);
    std::vector<std::map<std::string, std::string>> rows;
    while (std::getline(in, line)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      const auto f = split_csv_line(line);
      if (f.size() != header.size()) throw Error(ErrorKind::Parse, path + ": ragged row");
      std::map<std::string, std::string> row;
      for (std::size_t i = 0; i < f.size(); ++i) row[header[i]] = f[i];
      rows.push_back(std::move(row));
    }
    return rows;
  };
  const auto est = load(estimates_path);
  const auto tru = load(truth_path);
  std::map<std::pair<std::string, std::string>, double> truth;
  for (const auto& r : tru) truth[{r.at("region_id"), r.at("response")}] = std::stod(r.at("truth"));
  const std::string suffix = scale == "orig" ? "_orig" : "";
  std::map<std::string, std::vector<std::array<double, 4>>> by_response;
  for (const auto& r : est) {
    const auto key = std::make_pair(r.at("region_id"), r.at("response"));
    auto it = truth.find(key);
    if (it == truth.end()) throw Error(ErrorKind::ShapeMismatch, "no truth for " + key.first + "/" + key.second);
    by_response[key.second].push_back({std::stod(r.at("mean" + suffix)), std::stod(r.at("q025" + suffix)),
                                       std::stod(r.at("q975" + suffix)), it->second});
  }
  if (by_response.empty() || est.size() != truth.size()) {
    throw Error(ErrorKind::ShapeMismatch, "estimates and truth cover different cells");
  }
  json out = json::object();
  for (const auto& [resp, cells] : by_response) {
    const auto m = static_cast<Eigen::Index>(cells.size());
    Eigen::MatrixXd e(m, 1), l(m, 1), h(m, 1), t(m, 1);
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto& c = cells[static_cast<std::size_t>(i)];
      e(i, 0) = c[0];
      l(i, 0) = c[1];
      h(i, 0) = c[2];
      t(i, 0) = c[3];
    }
    out[resp] = {{"rmse", rmse(e, t)(0)},
                 {"interval_score", interval_score(l, h, t, alpha)(0)},
                 {"coverage", coverage(l, h, t)(0)},
                 {"cells", m}};
  }
  std::cout << out.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  // keep training-sized buffers on the heap instead of fresh mmaps per batch
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  CLI::App app{"Spatial small-area estimation with VAE-emulated priors"};
  app.require_subcommand(1);

  auto* graph_cmd = app.add_subcommand("graph", "Region graph utilities");
  graph_cmd->require_subcommand(1);
  std::string graph_path;
  auto* check = graph_cmd->add_subcommand("check", "Validate an edge list and print a JSON report");
  check->add_option("path", graph_path, "Edge-list file")->required();

  TrainOptions train_opts;
  auto* train_cmd = app.add_subcommand("train-prior", "Train a VAE decoder on CAR prior draws");
  train_cmd->add_option("--graph", train_opts.graph, "Edge-list file")->required();
  train_cmd->add_option("--layout", train_opts.layout, "uni or vec")->check(CLI::IsMember({"uni", "vec"}));
  train_cmd->add_option("--k", train_opts.k, "Responses for the vec layout");
  train_cmd->add_option("--samples", train_opts.samples, "Training draws");
  train_cmd->add_option("--out", train_opts.out, "Decoder artifact path")->required();
  train_cmd->add_option("--epochs", train_opts.config.epochs, "Maximum epochs");
  train_cmd->add_option("--batch-size", train_opts.config.batch_size, "Mini-batch size");
  train_cmd->add_option("--learning-rate", train_opts.config.learning_rate, "Adam step size");
  train_cmd->add_option("--lr-decay", train_opts.config.lr_decay, "Per-epoch learning-rate factor");
  train_cmd->add_option("--patience", train_opts.config.patience, "Early-stopping patience (epochs)");
  train_cmd->add_option("--seed", train_opts.config.seed, "Seed (SAE_SEED overrides)");
  train_cmd->add_option("--save-training-set", train_opts.training_out, "Also write the training draws");
  train_cmd->add_option("--trace", train_opts.trace_out, "Per-epoch ELBO trace CSV");
  train_cmd->add_flag("--allow-components", train_opts.allow_components, "Keep the largest component of a disconnected graph");
  train_cmd->add_flag("--verbose", train_opts.config.verbose, "Print per-epoch progress");

  FitOptions fit_opts;
  auto* fit_cmd = app.add_subcommand("fit", "Fit one model to direct estimates");
  fit_cmd->add_option("--model", fit_opts.model, "fh, sms, gms, vsms or vgms")->required();
  fit_cmd->add_option("--data", fit_opts.data, "Direct-estimate CSV")->required();
  fit_cmd->add_option("--graph", fit_opts.graph, "Edge-list file")->required();
  fit_cmd->add_option("--decoder", fit_opts.decoder, "Decoder artifact (variational models)");
  fit_cmd->add_option("--config", fit_opts.config, "JSON configuration");
  fit_cmd->add_option("--out", fit_opts.out, "Output directory")->required();
  fit_cmd->add_flag("--allow-components", fit_opts.allow_components, "Keep the largest component of a disconnected graph");

  std::string study_config, study_out;
  auto* study_cmd = app.add_subcommand("simulate-study", "Run a replicated simulation study");
  study_cmd->add_option("--config", study_config, "JSON configuration")->required();
  study_cmd->add_option("--out", study_out, "Output directory")->required();

  std::string est_path, truth_path, scale = "orig";
  double alpha = 0.05;
  auto* metrics_cmd = app.add_subcommand("metrics", "Score a theta summary against known truth");
  metrics_cmd->add_option("--estimates", est_path, "Theta summary CSV")->required();
  metrics_cmd->add_option("--truth", truth_path, "CSV with region_id,response,truth")->required();
  metrics_cmd->add_option("--scale", scale, "orig (default) or log");
  metrics_cmd->add_option("--alpha", alpha, "Interval-score level");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kValidationExit;
  }

  try {
    if (*check) return graph_check(graph_path);
    if (*train_cmd) return train_prior(train_opts);
    if (*fit_cmd) return fit_command(fit_opts);
    if (*study_cmd) return simulate_study(study_config, study_out);
    if (*metrics_cmd) return metrics_command(est_path, truth_path, scale, alpha);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return is_validation_error(e.kind()) ? kValidationExit : kSamplingExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidationExit;
  }
  return 0;
}

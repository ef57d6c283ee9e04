#include "nrr/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "nrr/data_gen.hpp"
#include "nrr/eval_metrics.hpp"
#include "nrr/io_util.hpp"
#include "nrr/nrr_model.hpp"
#include "nrr/rng.hpp"
#include "nrr/soft_relax.hpp"
#include "nrr/training.hpp"

namespace nrr::cli {

namespace {

bool quiet_log() {
  const char* level = std::getenv("NRR_LOG_LEVEL");
  return level != nullptr && std::string(level) == "quiet";
}

void info(std::ostream& log, const std::string& line) {
  if (!quiet_log()) log << line << '\n';
}

std::string json_string_list(const std::vector<std::string>& items) {
  std::string out = "[";
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ", ";
    out += "\"" + items[i] + "\"";
  }
  return out + "]";
}

std::string json_double_list(const std::vector<double>& items) {
  std::string out = "[";
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ", ";
    out += io::format_double17(items[i]);
  }
  return out + "]";
}

class ManifestTimer {
 public:
  ManifestTimer() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

void write_manifest(const std::string& primary_output, const std::string& command,
                    const std::string& config_json, const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs, std::uint64_t seed,
                    double duration_seconds) {
  std::string out = "{\n";
  out += "  \"command\": \"" + command + "\",\n";
  out += "  \"tool_version\": \"" + std::string(kToolVersion) + "\",\n";
  out += "  \"seed\": " + std::to_string(seed) + ",\n";
  out += "  \"config\": " + config_json + ",\n";
  out += "  \"inputs\": " + json_string_list(inputs) + ",\n";
  out += "  \"outputs\": " + json_string_list(outputs) + ",\n";
  out += "  \"duration_seconds\": " + io::format_double(duration_seconds) + "\n";
  out += "}\n";
  io::write_file_atomic(primary_output + ".manifest.json", out);
}

}  // namespace

void run_gen(const GenOptions& options, std::ostream& log) {
  ManifestTimer timer;
  data::Dataset ds = data::generate_dataset(options.agents, options.goods, options.count,
                                            options.seed, "muw");
  const std::string text = data::dataset_to_json(ds);
  io::write_file_atomic(options.out, text);
  info(log, "dataset " + options.out + " digest " + io::fnv1a64_hex(text));

  std::ostringstream config;
  config << "{\"agents\": " << options.agents << ", \"goods\": " << options.goods
         << ", \"count\": " << options.count << ", \"seed\": " << options.seed << ", \"out\": \""
         << options.out << "\"}";
  write_manifest(options.out, "gen", config.str(), {}, {options.out}, options.seed,
                 timer.seconds());
}

TrainArtifacts run_train(const TrainOptions& options, std::ostream& log) {
  ManifestTimer timer;
  data::Dataset train_set = data::load_dataset(options.train_path);
  data::Dataset val_set = data::load_dataset(options.val_path);

  training::TrainConfig config;
  config.epochs = options.epochs;
  config.batch_size = options.batch;
  config.learning_rate = options.learning_rate;
  config.lambda = options.lambda;
  config.rank = options.rank;
  config.tau_grid = options.tau_grid;
  config.tau_prime_grid = options.tau_prime_grid;
  config.seed = options.seed;

  auto [params, report] = training::train(train_set, val_set, config);

  TrainArtifacts artifacts;
  artifacts.checkpoint_path = options.out_prefix + ".checkpoint.json";
  artifacts.report_path = options.out_prefix + ".report.json";
  artifacts.loss_curve_path = options.out_prefix + ".loss.csv";
  model::save_checkpoint(params, artifacts.checkpoint_path);
  io::write_file_atomic(artifacts.report_path, training::report_to_json(report));
  io::write_file_atomic(artifacts.loss_curve_path, training::loss_curve_to_csv(report));
  info(log, "selected tau " + io::format_double(report.selected_tau) + " tau_prime " +
                io::format_double(report.selected_tau_prime) + ", validation hd " +
                io::format_double(report.candidates[report.selected_index].final_val_hd));

  std::ostringstream config_json;
  config_json << "{\"train\": \"" << options.train_path << "\", \"val\": \"" << options.val_path
              << "\", \"epochs\": " << options.epochs << ", \"batch\": " << options.batch
              << ", \"lr\": " << io::format_double17(options.learning_rate)
              << ", \"lambda\": " << io::format_double17(options.lambda)
              << ", \"rank\": " << options.rank
              << ", \"tau_grid\": " << json_double_list(options.tau_grid)
              << ", \"tau_prime_grid\": " << json_double_list(options.tau_prime_grid)
              << ", \"seed\": " << options.seed << ", \"out\": \"" << options.out_prefix
              << "\"}";
  write_manifest(artifacts.checkpoint_path, "train", config_json.str(),
                 {options.train_path, options.val_path},
                 {artifacts.checkpoint_path, artifacts.report_path, artifacts.loss_curve_path},
                 options.seed, timer.seconds());
  return artifacts;
}

void run_eval(const EvalOptions& options, std::ostream& log) {
  ManifestTimer timer;
  if (options.data_paths.empty()) throw std::invalid_argument("eval: no datasets given");

  eval::ModelUnderEval model;
  model.name = options.model;
  model::NrrParams params;
  if (options.model == "rr") {
    model.allocate = [](const fair::ValuationProfile& p) { return fair::round_robin(p); };
    model.order = [](const fair::ValuationProfile& p) {
      return fair::AgentPermutation::identity(p.agents());
    };
  } else if (options.model == "muw") {
    model.allocate = [](const fair::ValuationProfile& p) { return fair::muw_allocation(p); };
  } else if (options.model == "nrr") {
    if (options.checkpoint.empty()) {
      throw std::invalid_argument("eval: --checkpoint is required for the nrr model");
    }
    params = model::load_checkpoint(options.checkpoint);
    model.allocate = [&params](const fair::ValuationProfile& p) {
      return model::nrr_infer(p, params);
    };
    model.order = [&params](const fair::ValuationProfile& p) {
      return model::nrr_infer_order(p, params);
    };
  } else {
    throw std::invalid_argument("eval: unknown model \"" + options.model +
                                "\", expected rr, muw or nrr");
  }

  std::vector<eval::EvalSummary> summaries;
  for (const std::string& path : options.data_paths) {
    data::Dataset ds = data::load_dataset(path);
    if (options.model == "nrr" && params.rank > std::min(ds.meta.n, ds.meta.m)) {
      throw std::invalid_argument("eval: checkpoint rank " + std::to_string(params.rank) +
                                  " is incompatible with dataset " + path + " of shape " +
                                  std::to_string(ds.meta.n) + "x" + std::to_string(ds.meta.m));
    }
    summaries.push_back(eval::evaluate(model, ds));
    info(log, path + " hd_mean " + io::format_double(summaries.back().hd_mean) + " ef1_ratio " +
                  io::format_double(summaries.back().ef1_ratio) + " uwloss_mean " +
                  io::format_double(summaries.back().uwloss_mean));
  }
  io::write_file_atomic(options.out, eval::summaries_to_csv(summaries));

  std::vector<std::string> inputs = options.data_paths;
  if (!options.checkpoint.empty()) inputs.push_back(options.checkpoint);
  std::ostringstream config;
  config << "{\"model\": \"" << options.model << "\", \"checkpoint\": \"" << options.checkpoint
         << "\", \"data\": " << json_string_list(options.data_paths) << ", \"out\": \""
         << options.out << "\"}";
  write_manifest(options.out, "eval", config.str(), inputs, {options.out}, 0, timer.seconds());
}

void run_converge(const ConvergeOptions& options, std::ostream& log) {
  ManifestTimer timer;
  if (options.taus.empty()) throw std::invalid_argument("converge: no temperatures given");
  for (double tau : options.taus) {
    if (tau <= 0.0) throw std::invalid_argument("converge: temperatures must be positive");
  }

  // one profile with independent U[0,1) entries, rows redrawn on float ties
  RngStream rng(options.seed);
  Matrix v(options.agents, options.goods);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = rng.next_unit();
  for (std::size_t i = 0; i < options.agents; ++i) {
    auto row_tied = [&]() {
      for (std::size_t a = 0; a + 1 < options.goods; ++a) {
        for (std::size_t b = a + 1; b < options.goods; ++b) {
          if (v(i, a) == v(i, b)) return true;
        }
      }
      return false;
    };
    while (row_tied()) {
      for (std::size_t j = 0; j < options.goods; ++j) v(i, j) = rng.next_unit();
    }
  }
  fair::ValuationProfile profile(v);
  const Matrix exact = fair::round_robin(profile).to_matrix();

  std::string out = "{\n  \"meta\": {\"agents\": " + std::to_string(options.agents) +
                    ", \"goods\": " + std::to_string(options.goods) +
                    ", \"seed\": " + std::to_string(options.seed) +
                    ", \"taus\": " + json_double_list(options.taus) + "},\n";
  auto append_matrix = [&out](const Matrix& m) {
    out += "[";
    for (std::size_t i = 0; i < m.rows(); ++i) {
      if (i) out += ",";
      out += "[";
      for (std::size_t j = 0; j < m.cols(); ++j) {
        if (j) out += ",";
        out += io::format_double17(m(i, j));
      }
      out += "]";
    }
    out += "]";
  };
  out += "  \"valuations\": ";
  append_matrix(profile.matrix());
  out += ",\n  \"round_robin\": ";
  append_matrix(exact);
  out += ",\n  \"sweep\": [\n";
  for (std::size_t t = 0; t < options.taus.size(); ++t) {
    const double tau = options.taus[t];
    const Matrix soft = relax::soft_rr(profile, tau);
    const double max_dev = la::max_abs_diff(soft, exact);
    double mean_dev = 0.0;
    for (std::size_t i = 0; i < soft.size(); ++i) mean_dev += std::fabs(soft[i] - exact[i]);
    mean_dev /= static_cast<double>(soft.size());
    out += "    {\"tau\": " + io::format_double17(tau) + ", \"max_abs_deviation\": " +
           io::format_double17(max_dev) + ", \"mean_abs_deviation\": " +
           io::format_double17(mean_dev) + ", \"matrix\": ";
    append_matrix(soft);
    out += "}";
    out += t + 1 < options.taus.size() ? ",\n" : "\n";
    info(log, "tau " + io::format_double(tau) + " max deviation " + io::format_double(max_dev) +
                  " mean deviation " + io::format_double(mean_dev));
  }
  out += "  ]\n}\n";
  io::write_file_atomic(options.out, out);

  std::ostringstream config;
  config << "{\"agents\": " << options.agents << ", \"goods\": " << options.goods
         << ", \"seed\": " << options.seed << ", \"taus\": " << json_double_list(options.taus)
         << ", \"out\": \"" << options.out << "\"}";
  write_manifest(options.out, "converge", config.str(), {}, {options.out}, options.seed,
                 timer.seconds());
}

namespace {

std::string rank_pairs_path(const std::string& out) {
  const std::string suffix = ".csv";
  if (out.size() > suffix.size() && out.substr(out.size() - suffix.size()) == suffix) {
    return out.substr(0, out.size() - suffix.size()) + "_rankpairs.csv";
  }
  return out + "_rankpairs.csv";
}

}  // namespace

void run_orders(const OrdersOptions& options, std::ostream& log) {
  ManifestTimer timer;
  model::NrrParams params = model::load_checkpoint(options.checkpoint);
  data::Dataset ds = data::load_dataset(options.data_path);
  if (ds.meta.n < 2) {
    throw std::invalid_argument("orders: rank correlation needs at least two agents");
  }
  if (params.rank > std::min(ds.meta.n, ds.meta.m)) {
    throw std::invalid_argument("orders: checkpoint rank " + std::to_string(params.rank) +
                                " is incompatible with dataset shape " +
                                std::to_string(ds.meta.n) + "x" + std::to_string(ds.meta.m));
  }

  const fair::AgentPermutation identity = fair::AgentPermutation::identity(ds.meta.n);
  std::string csv = "sample_index,kendall_tau_learned,kendall_tau_identity\n";
  double learned_total = 0.0;
  double identity_total = 0.0;
  std::string rank_pairs = "x,y\n";
  for (std::size_t k = 0; k < ds.samples.size(); ++k) {
    const auto& profile = ds.samples[k].profile;
    const fair::AgentPermutation learned = model::nrr_infer_order(profile, params);
    const fair::AgentPermutation reference = eval::mean_valuation_order(profile);
    const double kt_learned = eval::kendall_tau(learned, reference);
    const double kt_identity = eval::kendall_tau(identity, reference);
    learned_total += kt_learned;
    identity_total += kt_identity;
    csv += std::to_string(k) + "," + io::format_double(kt_learned) + "," +
           io::format_double(kt_identity) + "\n";
    if (k == 0) {
      // point (x, y): the agent at rank x under mean valuations sits at
      // rank y in the learned order (1-based ranks)
      for (std::size_t x = 0; x < ds.meta.n; ++x) {
        const std::size_t agent = reference.agent_at(x);
        rank_pairs += std::to_string(x + 1) + "," +
                      std::to_string(learned.position_of(agent) + 1) + "\n";
      }
    }
  }
  const double count = static_cast<double>(ds.samples.size());
  csv += "mean," + io::format_double(learned_total / count) + "," +
         io::format_double(identity_total / count) + "\n";
  io::write_file_atomic(options.out, csv);
  const std::string pairs_path = rank_pairs_path(options.out);
  io::write_file_atomic(pairs_path, rank_pairs);
  info(log, "mean kendall tau: learned " + io::format_double(learned_total / count) +
                ", identity " + io::format_double(identity_total / count));

  std::ostringstream config;
  config << "{\"checkpoint\": \"" << options.checkpoint << "\", \"data\": \""
         << options.data_path << "\", \"out\": \"" << options.out << "\"}";
  write_manifest(options.out, "orders", config.str(), {options.checkpoint, options.data_path},
                 {options.out, pairs_path}, 0, timer.seconds());
}

}  // namespace nrr::cli

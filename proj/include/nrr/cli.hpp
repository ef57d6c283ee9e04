#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace nrr::cli {

inline constexpr const char* kToolVersion = "0.1.0";

struct GenOptions {
  std::size_t agents = 0;
  std::size_t goods = 0;
  std::size_t count = 0;
  std::uint64_t seed = 1;
  std::string out;
};

struct TrainOptions {
  std::string train_path;
  std::string val_path;
  std::size_t epochs = 20;
  std::size_t batch = 4;
  double learning_rate = 0.05;
  double lambda = 0.0;
  std::size_t rank = 3;
  std::vector<double> tau_grid = {1.0, 0.1, 0.01};
  std::vector<double> tau_prime_grid = {1.0, 0.1, 0.01};
  std::uint64_t seed = 1;
  std::string out_prefix;
};

struct EvalOptions {
  std::string model;  // rr | muw | nrr
  std::string checkpoint;
  std::vector<std::string> data_paths;
  std::string out;
};

struct ConvergeOptions {
  std::size_t agents = 10;
  std::size_t goods = 20;
  std::uint64_t seed = 5;
  std::vector<double> taus = {1.0, 0.05, 0.001};
  std::string out;
};

struct OrdersOptions {
  std::string checkpoint;
  std::string data_path;
  std::string out;
};

// Each runner performs the command, writes its artifacts plus a manifest
// next to the primary output, and throws on failure. Informational lines go
// to `log` unless the NRR_LOG_LEVEL environment variable is set to "quiet".

void run_gen(const GenOptions& options, std::ostream& log);

struct TrainArtifacts {
  std::string checkpoint_path;
  std::string report_path;
  std::string loss_curve_path;
};
TrainArtifacts run_train(const TrainOptions& options, std::ostream& log);

void run_eval(const EvalOptions& options, std::ostream& log);
void run_converge(const ConvergeOptions& options, std::ostream& log);
void run_orders(const OrdersOptions& options, std::ostream& log);

}  // namespace nrr::cli

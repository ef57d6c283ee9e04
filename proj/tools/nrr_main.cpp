#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nrr/cli.hpp"

namespace {

std::vector<double> parse_double_list(const std::string& text, const std::string& flag) {
  std::vector<double> out;
  std::size_t begin = 0;
  while (begin <= text.size()) {
    const std::size_t comma = text.find(',', begin);
    const std::string token =
        comma == std::string::npos ? text.substr(begin) : text.substr(begin, comma - begin);
    try {
      std::size_t used = 0;
      const double v = std::stod(token, &used);
      if (used != token.size()) throw std::invalid_argument(token);
      out.push_back(v);
    } catch (const std::exception&) {
      throw CLI::ValidationError(flag, "expected a comma-separated list of reals, got \"" +
                                           text + "\"");
    }
    if (comma == std::string::npos) break;
    begin = comma + 1;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learned round-robin allocation mechanisms: data generation, training, "
               "evaluation, convergence sweeps and order analysis"};
  app.require_subcommand(1);

  nrr::cli::GenOptions gen;
  CLI::App* cmd_gen = app.add_subcommand("gen", "Generate a labeled synthetic dataset");
  cmd_gen->add_option("--agents", gen.agents, "Number of agents")->required()
      ->check(CLI::PositiveNumber);
  cmd_gen->add_option("--goods", gen.goods, "Number of goods")->required()
      ->check(CLI::PositiveNumber);
  cmd_gen->add_option("--count", gen.count, "Number of samples")->required()
      ->check(CLI::PositiveNumber);
  cmd_gen->add_option("--seed", gen.seed, "Generator seed")->default_val(1);
  cmd_gen->add_option("--out", gen.out, "Output dataset path")->required();

  nrr::cli::TrainOptions train;
  std::string tau_grid_text = "1.0,0.1,0.01";
  std::string tau_prime_grid_text = "1.0,0.1,0.01";
  CLI::App* cmd_train = app.add_subcommand("train", "Train the ordering network");
  cmd_train->add_option("--train", train.train_path, "Training dataset")->required();
  cmd_train->add_option("--val", train.val_path, "Validation dataset")->required();
  cmd_train->add_option("--epochs", train.epochs, "Training epochs")->default_val(20)
      ->check(CLI::PositiveNumber);
  cmd_train->add_option("--batch", train.batch, "Mini-batch size")->default_val(4)
      ->check(CLI::PositiveNumber);
  cmd_train->add_option("--lr", train.learning_rate, "Learning rate")->default_val(0.05)
      ->check(CLI::PositiveNumber);
  cmd_train->add_option("--lambda", train.lambda, "Envy penalty multiplier")->default_val(0.0)
      ->check(CLI::NonNegativeNumber);
  cmd_train->add_option("--rank", train.rank, "Embedding rank")->default_val(3)
      ->check(CLI::PositiveNumber);
  cmd_train->add_option("--tau-grid", tau_grid_text, "Comma-separated picking temperatures");
  cmd_train->add_option("--tau-prime-grid", tau_prime_grid_text,
                        "Comma-separated sorting temperatures");
  cmd_train->add_option("--seed", train.seed, "Training seed")->default_val(1);
  cmd_train->add_option("--out", train.out_prefix, "Output path prefix")->required();

  nrr::cli::EvalOptions eval;
  CLI::App* cmd_eval = app.add_subcommand("eval", "Evaluate a model on datasets");
  cmd_eval->add_option("--model", eval.model, "Model: rr, muw or nrr")->required();
  cmd_eval->add_option("--checkpoint", eval.checkpoint, "Checkpoint for the nrr model");
  cmd_eval->add_option("--data", eval.data_paths, "Dataset path (repeatable)")->required()
      ->take_all();
  cmd_eval->add_option("--out", eval.out, "Output CSV path")->required();

  nrr::cli::ConvergeOptions converge;
  std::string taus_text = "1.0,0.05,0.001";
  CLI::App* cmd_converge =
      app.add_subcommand("converge", "Temperature sweep of the soft picking procedure");
  cmd_converge->add_option("--agents", converge.agents, "Number of agents")->default_val(10)
      ->check(CLI::PositiveNumber);
  cmd_converge->add_option("--goods", converge.goods, "Number of goods")->default_val(20)
      ->check(CLI::PositiveNumber);
  cmd_converge->add_option("--seed", converge.seed, "Profile seed")->default_val(5);
  cmd_converge->add_option("--taus", taus_text, "Comma-separated temperatures");
  cmd_converge->add_option("--out", converge.out, "Output JSON path")->required();

  nrr::cli::OrdersOptions orders;
  CLI::App* cmd_orders =
      app.add_subcommand("orders", "Compare learned agent orders with mean-valuation orders");
  cmd_orders->add_option("--checkpoint", orders.checkpoint, "Model checkpoint")->required();
  cmd_orders->add_option("--data", orders.data_path, "Dataset path")->required();
  cmd_orders->add_option("--out", orders.out, "Output CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }

  if (cmd_eval->parsed() && eval.model == "nrr" && eval.checkpoint.empty()) {
    std::cerr << "error: --checkpoint is required for the nrr model\n";
    return 2;
  }

  try {
    if (cmd_gen->parsed()) {
      nrr::cli::run_gen(gen, std::cout);
    } else if (cmd_train->parsed()) {
      train.tau_grid = parse_double_list(tau_grid_text, "--tau-grid");
      train.tau_prime_grid = parse_double_list(tau_prime_grid_text, "--tau-prime-grid");
      nrr::cli::run_train(train, std::cout);
    } else if (cmd_eval->parsed()) {
      nrr::cli::run_eval(eval, std::cout);
    } else if (cmd_converge->parsed()) {
      converge.taus = parse_double_list(taus_text, "--taus");
      nrr::cli::run_converge(converge, std::cout);
    } else if (cmd_orders->parsed()) {
      nrr::cli::run_orders(orders, std::cout);
    }
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

// exost: synthesize panels, train and evaluate forecasters, run ablation and
// corruption grids, and dump graphs.

#include <cstdio>
#include <exception>
#include <iostream>

#include <CLI11.hpp>

#include "cli/experiment.hpp"
#include "exost/runtime.hpp"

namespace {

using namespace exost;
using namespace exost::cli;

struct Flags {
  RunConfig run;
  std::string backbone = "grugcn";
  std::string graph = "pearson";
  std::string fusion = "context";
  std::string activation = "relu";
  std::string loss = "mae";
  bool no_selector = false;
  bool no_balancer = false;
  bool use_past = false, use_future = false, use_date = false;
  std::string corrupt;
  double corrupt_ratio = 0.0;
  std::string corrupt_phase = "all";

  // Folds the string-valued flags into `run`.
  RunConfig resolve() const {
    RunConfig c = run;
    c.model.backbone = parse_backbone(backbone);
    c.model.graph = parse_graph_kind(graph);
    c.model.fusion = parse_fusion(fusion);
    c.model.activation = parse_activation(activation);
    c.model.use_selector = !no_selector;
    c.model.use_balancer = !no_balancer;
    c.train.loss = parse_loss(loss);
    if (use_past || use_future || use_date) c.channels = {use_past, use_future, use_date};
    if (!corrupt.empty()) {
      c.corruption = CorruptionSpec{parse_corruption(corrupt), corrupt_ratio,
                                    parse_corrupt_phase(corrupt_phase)};
    } else if (corrupt_phase != "all") {
      c.corruption = CorruptionSpec{CorruptionStrategy::zero, 0.0, parse_corrupt_phase(corrupt_phase)};
    }
    return c;
  }
};

void add_data_flags(CLI::App* app, Flags& f) {
  app->add_option("--data", f.run.data, "Panel CSV (node_id,timestamp,<variables>)");
  app->add_option("--schema", f.run.schema, "Variable role schema (JSON)");
}

void add_run_flags(CLI::App* app, Flags& f) {
  add_data_flags(app, f);
  app->add_option("--out", f.run.out, "Output directory")->required();
  app->add_option("--seed", f.run.seed, "Random seed");
  app->add_option("--experts", f.run.model.experts, "Number of experts K")->check(CLI::PositiveNumber);
  app->add_option("--hidden", f.run.model.hidden, "Hidden width H")->check(CLI::PositiveNumber);
  app->add_option("--backbone", f.backbone, "grugcn | mlp-mixer");
  app->add_option("--graph", f.graph, "pearson | adaptive | adaptive-directed | identity");
  app->add_option("--topk", f.run.model.graph_topk, "Neighbours kept by the pearson graph");
  app->add_option("--fusion", f.fusion, "context | shared | simple | learnable | attention");
  app->add_option("--activation", f.activation, "relu | identity | tanh | leaky-relu");
  app->add_option("--dropout", f.run.model.dropout, "Dropout rate of the conditional embedding");
  app->add_flag("--no-selector", f.no_selector, "Bypass the mixture-of-experts selector");
  app->add_flag("--no-balancer", f.no_balancer, "Sum branch forecasts instead of balancing");
  app->add_flag("--use-past", f.use_past, "Data ablation: keep past exogenous channels");
  app->add_flag("--use-future", f.use_future, "Data ablation: keep future exogenous channels");
  app->add_flag("--use-date", f.use_date, "Data ablation: keep date channels");
  app->add_flag("--zero-exogenous", f.run.zero_exogenous, "Hard-zero raw exogenous channels");
  app->add_option("--corrupt", f.corrupt, "zero | random");
  app->add_option("--corrupt-ratio", f.corrupt_ratio, "Fraction of exogenous entries replaced")
      ->check(CLI::Range(0.0, 1.0));
  app->add_option("--corrupt-phase", f.corrupt_phase, "eval | all");
  app->add_option("--horizon-days", f.run.horizon_days, "Evaluation horizon in days")
      ->check(CLI::Range(1, 3));
  app->add_option("--steps-in", f.run.model.steps_in, "History length")->check(CLI::PositiveNumber);
  app->add_option("--steps-out", f.run.model.steps_out, "Steps per forecast day")
      ->check(CLI::PositiveNumber);
  app->add_option("--epochs", f.run.train.epochs, "Maximum epochs")->check(CLI::PositiveNumber);
  app->add_option("--batch", f.run.train.batch, "Batch size")->check(CLI::PositiveNumber);
  app->add_option("--patience", f.run.train.patience, "Early-stopping patience")
      ->check(CLI::PositiveNumber);
  app->add_option("--lr-max", f.run.train.lr_max, "Initial learning rate");
  app->add_option("--lr-min", f.run.train.lr_min, "Final learning rate");
  app->add_option("--weight-decay", f.run.train.weight_decay, "AdamW weight decay");
  app->add_option("--loss", f.loss, "mae | mse");
  app->add_option("--jobs", f.run.jobs, "Worker threads for grid commands")
      ->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  exost::configure_allocator();
  CLI::App app{"Exogenous-aware spatio-temporal forecasting"};
  app.require_subcommand(1);

  SynthOptions synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic panel with known signal");
  synth_cmd->add_option("--out", synth.out, "Output directory")->required();
  synth_cmd->add_option("--nodes", synth.synth.nodes, "Number of nodes")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--steps", synth.synth.steps, "Number of hourly steps");
  synth_cmd->add_option("--lag", synth.synth.lag, "Lag of the past exogenous effect");
  synth_cmd->add_option("--noise", synth.synth.noise, "Noise standard deviation");
  synth_cmd->add_option("--seed", synth.synth.seed, "Random seed");
  synth_cmd->add_option("--past-coef", synth.synth.past_coef, "Weight of the lagged past signal");
  synth_cmd->add_option("--future-coef", synth.synth.future_coef, "Weight of the future driver");
  synth_cmd->add_option("--seasonal", synth.synth.seasonal_amplitude, "Daily cycle amplitude");
  synth_cmd->add_option("--distractors", synth.synth.distractors, "Uninformative past channels");

  Flags train_flags, eval_flags, ablate_flags, corrupt_flags, graph_flags;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write its archive");
  add_run_flags(train_cmd, train_flags);

  std::string eval_dir;
  std::size_t eval_days = 0;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a trained run directory");
  eval_cmd->add_option("--out", eval_dir, "Run directory written by train")->required();
  eval_cmd->add_option("--horizon-days", eval_days, "Evaluation horizon in days")
      ->check(CLI::Range(1, 3));

  auto* ablate_cmd = app.add_subcommand("ablate", "Data, component and fusion ablation grid");
  add_run_flags(ablate_cmd, ablate_flags);

  auto* corrupt_cmd = app.add_subcommand("corrupt-eval", "Exogenous corruption grid");
  add_run_flags(corrupt_cmd, corrupt_flags);

  std::string graph_model;
  auto* graph_cmd = app.add_subcommand("graph", "Print the adjacency matrix as CSV");
  add_data_flags(graph_cmd, graph_flags);
  graph_cmd->add_option("--graph", graph_flags.graph, "pearson | adaptive | adaptive-directed | identity");
  graph_cmd->add_option("--topk", graph_flags.run.model.graph_topk, "Neighbours kept by the pearson graph");
  graph_cmd->add_option("--model", graph_model, "Trained run directory (adaptive graphs)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth_cmd) {
      cmd_synth(synth);
    } else if (*train_cmd) {
      Experiment e = cmd_train(train_flags.resolve());
      std::cout << format_table("test metrics", {{"model", e.test}});
    } else if (*eval_cmd) {
      std::optional<std::size_t> days;
      if (eval_days > 0) days = eval_days;
      std::cout << format_table("test metrics", {{"model", cmd_eval(eval_dir, days)}});
    } else if (*ablate_cmd) {
      std::cout << format_table("ablation", cmd_ablate(ablate_flags.resolve()));
    } else if (*corrupt_cmd) {
      std::cout << format_table("exogenous corruption", cmd_corrupt_eval(corrupt_flags.resolve()));
    } else if (*graph_cmd) {
      RunConfig c = graph_flags.resolve();
      std::optional<std::filesystem::path> dir;
      if (!graph_model.empty()) dir = graph_model;
      std::cout << cmd_graph(c, dir);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "exost: %s\n", e.what());
    return 1;
  }
  return 0;
}

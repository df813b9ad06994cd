// Command-line driver: data generation, training, likelihood scoring and the
// experiment tables. Every file written starts with a '#' metadata line.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "egan/coupling_inference.hpp"
#include "egan/entropic_gan.hpp"
#include "egan/experiments.hpp"
#include "egan/io.hpp"
#include "egan/likelihood.hpp"

namespace fs = std::filesystem;
using namespace egan;

namespace {

constexpr const char* kOutDirEnv = "EGAN_OUT_DIR";

struct Common {
  std::string out_dir = ".";
  std::uint64_t seed = 0;

  fs::path dir() const {
    if (const char* env = std::getenv(kOutDirEnv); env && *env) return env;
    return out_dir;
  }
};

// Raw option text for the metadata line. Output locations are left out so
// that identical runs into different directories produce identical bytes.
Metadata describe(const CLI::App& sub) {
  Metadata meta{{"command", sub.get_name()}};
  for (const CLI::Option* opt : sub.get_options()) {
    if (opt->get_lnames().empty()) continue;
    const std::string& name = opt->get_lnames().front();
    if (name == "help" || name == "out-dir") continue;
    std::string value;
    if (opt->count() > 0) {
      for (const auto& r : opt->results()) value += (value.empty() ? "" : ",") + r;
    } else {
      value = opt->get_default_str();
    }
    meta.emplace_back(name, value);
  }
  return meta;
}

void log_line(const std::string& msg) { std::cerr << msg << std::endl; }

struct TrainFlags {
  std::vector<int> generator_hidden{128, 128};
  std::vector<int> discriminator_hidden{128, 128};
  std::string generator_activation = "identity";
  std::string optimizer = "adam";
  std::string loss = "half_squared_l2";
  double lr = 2e-4;
  double d_lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int batch_size = 512;
  int critic_steps = 10;
  std::int64_t iterations = 1000;
  std::int64_t checkpoint_interval = 500;

  void add(CLI::App& sub, bool with_arch) {
    if (with_arch) {
      sub.add_option("--generator-hidden", generator_hidden, "generator hidden widths")->delimiter(',');
      sub.add_option("--discriminator-hidden", discriminator_hidden, "discriminator hidden widths")->delimiter(',');
      sub.add_option("--generator-activation", generator_activation, "identity | leaky_relu");
      sub.add_option("--loss", loss, "half_squared_l2 | l2");
    }
    sub.add_option("--optimizer", optimizer, "adam | sgd_momentum");
    sub.add_option("--lr", lr, "generator learning rate");
    sub.add_option("--d-lr", d_lr, "discriminator learning rate");
    sub.add_option("--beta1", beta1, "Adam beta1 / SGD momentum");
    sub.add_option("--beta2", beta2, "Adam beta2");
    sub.add_option("--epsilon", epsilon, "Adam epsilon");
    sub.add_option("--batch-size", batch_size, "minibatch size");
    sub.add_option("--critic-steps", critic_steps, "discriminator steps per generator step");
    sub.add_option("--iterations", iterations, "generator iterations");
    sub.add_option("--checkpoint-interval", checkpoint_interval, "generator iterations between checkpoints");
  }

  TrainConfig config(double lambda, int latent_dim, std::uint64_t seed) const {
    TrainConfig c;
    c.lambda = lambda;
    c.latent_dim = latent_dim;
    c.loss = parse_loss(loss);
    c.generator_hidden = generator_hidden;
    c.discriminator_hidden = discriminator_hidden;
    c.generator_activation = parse_activation(generator_activation);
    const OptimizerKind kind = parse_optimizer(optimizer);
    c.generator_optimizer = {kind, lr, beta1, beta2, epsilon};
    c.discriminator_optimizer = {kind, d_lr, beta1, beta2, epsilon};
    c.batch_size = batch_size;
    c.critic_steps = critic_steps;
    c.iterations = iterations;
    c.checkpoint_interval = checkpoint_interval;
    c.seed = seed;
    return c;
  }
};

std::string num(double v) { return format_decimal(v); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Entropic OT GAN training and surrogate likelihood tools"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  app.set_version_flag("--version", kToolVersion);

  Common common;
  auto add_common = [&common](CLI::App& sub) {
    sub.add_option("--out-dir", common.out_dir, std::string("output directory (overridden by ") + kOutDirEnv + ")");
    sub.add_option("--seed", common.seed, "base random seed");
  };

  // gen-data
  GenDataConfig gen;
  std::string gen_name = "data";
  CLI::App* gen_cmd = app.add_subcommand("gen-data", "draw a linear-Gaussian dataset and its generating matrix");
  gen_cmd->add_option("--dim", gen.dim, "data dimension d");
  int gen_latent = 0;
  gen_cmd->add_option("--latent-dim", gen_latent, "latent dimension r (0: same as d)");
  gen_cmd->add_option("--samples", gen.samples, "number of points");
  gen_cmd->add_option("--lambda", gen.lambda, "noise variance");
  gen_cmd->add_option("--offset", gen.offset, "mean shift added to every coordinate");
  gen_cmd->add_option("--name", gen_name, "output file stem");
  add_common(*gen_cmd);

  // train
  std::string train_data, train_name = "model";
  double train_lambda = 0.1;
  int train_latent = 0;
  bool wall_time = false;
  TrainFlags train_flags;
  CLI::App* train_cmd = app.add_subcommand("train", "train an entropic GAN on a dataset");
  train_cmd->add_option("--data", train_data, "dataset CSV")->required();
  train_cmd->add_option("--lambda", train_lambda, "entropy weight");
  train_cmd->add_option("--latent-dim", train_latent, "latent dimension r (0: same as d)");
  train_cmd->add_option("--name", train_name, "output file stem");
  train_cmd->add_flag("--log-wall-time", wall_time, "add a wall-clock column to the training log");
  train_flags.add(*train_cmd, true);
  add_common(*train_cmd);

  // likelihood
  std::string lik_model, lik_input, lik_output = "likelihood.csv";
  std::string lik_weight = "algorithm1", lik_entropy = "algorithm1", lik_constant = "dimensional";
  Eigen::Index lik_n = 10000;
  CLI::App* lik_cmd = app.add_subcommand("likelihood", "surrogate log-likelihood per sample");
  lik_cmd->add_option("--model", lik_model, "model file")->required();
  lik_cmd->add_option("--input", lik_input, "samples CSV")->required();
  lik_cmd->add_option("--output", lik_output, "output CSV name");
  lik_cmd->add_option("--posterior-samples", lik_n, "latent samples per test point");
  lik_cmd->add_option("--weight-mode", lik_weight, "algorithm1 | snis");
  lik_cmd->add_option("--entropy-mode", lik_entropy, "algorithm1 | differential");
  lik_cmd->add_option("--constant-mode", lik_constant, "paper | dimensional | sample | none");
  add_common(*lik_cmd);

  // table1 / table2
  auto add_tightness = [&](CLI::App& sub, TightnessConfig& cfg, TrainFlags& flags, std::string& name) {
    sub.add_option("--dims", cfg.dims, "data dimensions")->delimiter(',');
    sub.add_option("--lambda", cfg.lambda, "entropy weight");
    sub.add_option("--train-size", cfg.train_size, "training points per dimension");
    sub.add_option("--test-samples", cfg.test_samples, "test points averaged per dimension");
    sub.add_option("--posterior-samples", cfg.posterior_samples, "latent samples per test point");
    sub.add_option("--refine-steps", cfg.refine_steps, "discriminator refinement steps after training");
    sub.add_option("--refine-lr", cfg.refine_learning_rate, "discriminator learning rate while refining");
    sub.add_option("--name", name, "output file stem");
    flags.add(sub, false);
    add_common(sub);
  };
  TightnessConfig t1 = default_table1_config(), t2 = default_table2_config();
  TrainFlags t1_flags, t2_flags;
  std::string t1_name = "table1", t2_name = "table2";
  CLI::App* t1_cmd = app.add_subcommand("table1", "bound tightness with linear generators");
  add_tightness(*t1_cmd, t1, t1_flags, t1_name);
  CLI::App* t2_cmd = app.add_subcommand("table2", "bound tightness with nonlinear generators");
  add_tightness(*t2_cmd, t2, t2_flags, t2_name);

  // evolution
  EvolutionConfig evo = default_evolution_config();
  TrainFlags evo_flags;
  evo_flags.iterations = evo.train.iterations;
  evo_flags.checkpoint_interval = evo.train.checkpoint_interval;
  std::optional<double> range_low, range_high;
  std::string evo_weight = "algorithm1", evo_entropy = "algorithm1", evo_constant = "none";
  CLI::App* evo_cmd = app.add_subcommand("evolution", "surrogate likelihood histograms across training");
  evo_cmd->add_option("--dim", evo.dim, "data dimension");
  evo_cmd->add_option("--offset", evo.offset, "data mean shift per coordinate");
  evo_cmd->add_option("--lambda", evo.lambda, "entropy weight");
  evo_cmd->add_option("--train-size", evo.train_size, "training points");
  evo_cmd->add_option("--heldout", evo.heldout, "held-out points scored per checkpoint");
  evo_cmd->add_option("--refine-steps", evo.refine_steps, "discriminator steps before scoring");
  evo_cmd->add_option("--bins", evo.bins, "histogram bins");
  evo_cmd->add_option("--range-low", range_low, "histogram lower edge");
  evo_cmd->add_option("--range-high", range_high, "histogram upper edge");
  evo_cmd->add_option("--posterior-samples", evo.likelihood.samples, "latent samples per point");
  evo_cmd->add_option("--weight-mode", evo_weight, "algorithm1 | snis");
  evo_cmd->add_option("--entropy-mode", evo_entropy, "algorithm1 | differential");
  evo_cmd->add_option("--constant-mode", evo_constant, "paper | dimensional | sample | none");
  evo_flags.add(*evo_cmd, true);
  add_common(*evo_cmd);

  // sinkhorn-check
  SinkhornCheckConfig sk;
  CLI::App* sk_cmd = app.add_subcommand("sinkhorn-check", "Sinkhorn solver and loss bound checks");
  sk_cmd->add_option("--instances", sk.instances, "random instances");
  sk_cmd->add_option("--max-size", sk.max_size, "largest support size");
  sk_cmd->add_option("--lambdas", sk.lambdas, "entropy weights cycled over instances")->delimiter(',');
  add_common(*sk_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: kind=usage message=" << e.what() << std::endl;
    return 2;
  }

  try {
    const fs::path out = common.dir();

    if (*gen_cmd) {
      gen.latent_dim = gen_latent > 0 ? gen_latent : gen.dim;
      gen.seed = common.seed;
      const Metadata meta = describe(*gen_cmd);
      const LinearGaussianOracle oracle = random_linear_gaussian(gen);
      const SampleBatch data = generate_data(oracle, gen);
      const Matrix points = data.size() > 0 ? data.points : Matrix(0, gen.dim);
      save_dataset(out / (gen_name + ".csv"), points, meta);
      save_oracle(out / (gen_name + "_oracle.json"), oracle, meta);
      return 0;
    }

    if (*train_cmd) {
      const Metadata meta = describe(*train_cmd);
      const Matrix points = load_dataset(train_data);
      const int d = static_cast<int>(points.cols());
      const TrainConfig cfg = train_flags.config(train_lambda, train_latent > 0 ? train_latent : d, common.seed);
      const SampleBatch data(points);
      std::string last_checkpoint = "none (initial model)";
      auto on_checkpoint = [&](const EntropicGanModel& m, std::int64_t it) {
        const fs::path p = out / (train_name + "_ckpt_" + std::to_string(it) + ".json");
        save_model(p, m, meta);
        last_checkpoint = p.string();
      };
      try {
        EntropicGanModel model = init_model(cfg, d, data.size());
        const TrainLog log = train_from(model, cfg, data, on_checkpoint);
        save_model(out / (train_name + ".json"), model, meta);
        write_file_atomic(out / (train_name + "_log.csv"), train_log_csv(log, meta, wall_time));
      } catch (const TrainingDiverged& e) {
        std::cerr << "error: kind=" << e.kind() << " message=" << e.what()
                  << "; last checkpoint: " << last_checkpoint << std::endl;
        return 1;
      }
      return 0;
    }

    if (*lik_cmd) {
      const Metadata meta = describe(*lik_cmd);
      const EntropicGanModel model = load_model(lik_model);
      const Matrix points = load_dataset(lik_input);
      if (points.cols() != model.data_dim) {
        throw ShapeError("samples have dimension " + std::to_string(points.cols()) + ", model expects " +
                         std::to_string(model.data_dim));
      }
      LikelihoodOptions o;
      o.samples = lik_n;
      o.seed = common.seed;
      o.weight_mode = parse_weight_mode(lik_weight);
      o.entropy_mode = parse_entropy_mode(lik_entropy);
      o.constant_mode = parse_constant_mode(lik_constant);
      const auto reports = score_samples(points, potential_view(model), o);
      std::string csv = metadata_line(meta) + "\n";
      csv += "index,total,cost,entropy,prior,constant,standard_error\n";
      for (std::size_t i = 0; i < reports.size(); ++i) {
        const auto& r = reports[i];
        csv += join_csv({std::to_string(i), num(r.total), num(r.cost), num(r.entropy), num(r.prior),
                         num(r.constant), num(r.standard_error)}) + "\n";
      }
      write_file_atomic(out / lik_output, csv);
      return 0;
    }

    if (*t1_cmd) {
      const Metadata meta = describe(*t1_cmd);
      t1.train = t1_flags.config(t1.lambda, 0, 0);
      t1.seed = common.seed;
      std::string csv = metadata_line(meta) + "\n";
      csv += "dimension,approximation_gap,surrogate_log_likelihood,gap_standard_error,"
             "surrogate_standard_error,elbo,exact_log_likelihood,iterations,status\n";
      for (int d : t1.dims) {
        const Table1Row r = run_table1_dim(t1, d, log_line);
        csv += join_csv({std::to_string(r.dim), num(r.gap), num(r.surrogate), num(r.gap_se),
                         num(r.surrogate_se), num(r.elbo), num(r.exact), std::to_string(r.iterations),
                         r.status}) + "\n";
      }
      write_file_atomic(out / (t1_name + ".csv"), csv);
      return 0;
    }

    if (*t2_cmd) {
      const Metadata meta = describe(*t2_cmd);
      t2.train = t2_flags.config(t2.lambda, 0, 0);
      t2.seed = common.seed;
      std::string csv = metadata_line(meta) + "\n";
      csv += "dimension,exact_log_likelihood,surrogate_log_likelihood,surrogate_standard_error,"
             "relative_gap,iterations,status\n";
      for (int d : t2.dims) {
        const Table2Row r = run_table2_dim(t2, d, log_line);
        csv += join_csv({std::to_string(r.dim), num(r.exact), num(r.surrogate), num(r.surrogate_se),
                         num(r.relative_gap), std::to_string(r.iterations), r.status}) + "\n";
      }
      write_file_atomic(out / (t2_name + ".csv"), csv);
      return 0;
    }

    if (*evo_cmd) {
      const Metadata meta = describe(*evo_cmd);
      evo.train = evo_flags.config(evo.lambda, evo.dim, 0);
      evo.seed = common.seed;
      if (range_low.has_value() != range_high.has_value()) {
        throw InvalidArgument("--range-low and --range-high go together");
      }
      if (range_low) evo.range = std::make_pair(*range_low, *range_high);
      evo.likelihood.weight_mode = parse_weight_mode(evo_weight);
      evo.likelihood.entropy_mode = parse_entropy_mode(evo_entropy);
      evo.likelihood.constant_mode = parse_constant_mode(evo_constant);
      const auto checkpoints = run_evolution(evo, log_line);
      std::string summary = metadata_line(meta) + "\n" + "checkpoint,iteration,median,mean\n";
      for (std::size_t k = 0; k < checkpoints.size(); ++k) {
        const auto& cp = checkpoints[k];
        std::string csv = metadata_line(meta) + "\n" + "bin_low,bin_high,count\n";
        for (const auto& b : cp.histogram) {
          csv += join_csv({num(b.low), num(b.high), std::to_string(b.count)}) + "\n";
        }
        write_file_atomic(out / ("evolution_" + std::to_string(cp.iteration) + ".csv"), csv);
        summary += join_csv({std::to_string(k), std::to_string(cp.iteration), num(cp.median), num(cp.mean)}) + "\n";
      }
      write_file_atomic(out / "evolution_summary.csv", summary);
      return 0;
    }

    if (*sk_cmd) {
      const Metadata meta = describe(*sk_cmd);
      sk.seed = common.seed;
      std::string csv = metadata_line(meta) + "\n";
      csv += "instance,n,m,lambda,same,sinkhorn_loss,two_w,entropy_bound,sandwich,max_coupling_error\n";
      for (const auto& r : run_sinkhorn_check(sk)) {
        csv += join_csv({std::to_string(r.instance), std::to_string(r.n), std::to_string(r.m), num(r.lambda),
                         r.same ? "1" : "0", num(r.sinkhorn_loss), num(r.two_w), num(r.entropy_bound),
                         r.sandwich ? "pass" : "fail", num(r.max_coupling_error)}) + "\n";
      }
      write_file_atomic(out / "sinkhorn_check.csv", csv);
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: kind=" << e.kind() << " message=" << e.what() << std::endl;
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: kind=internal message=" << e.what() << std::endl;
    return 1;
  }
  return 0;
}

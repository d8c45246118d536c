// qmem: simulate, reconstruct and analyze gate sequences for memory effects.

#include <iostream>

#include "CLI11.hpp"
#include "qmem/cli.hpp"

int main(int argc, char** argv) {
  using qmem::cli::RunConfig;
  CLI::App app{"Process tomography and non-Markovian memory analysis"};
  app.require_subcommand(1);

  RunConfig cfg;
  std::uint64_t shots = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", cfg.seed, "Random seed")->default_val(0);
    sub->add_option("--out", cfg.out, "Output directory")->default_val(".");
    sub->add_flag("--timestamp", cfg.timestamp, "Record wall-clock time in outputs (breaks byte-identical reruns)");
  };

  auto* sim = app.add_subcommand("simulate", "Sample tomography records from a model");
  sim->add_option("--model", cfg.model, "Model spec JSON")->required();
  sim->add_option("--gates", cfg.gates, "Sequences, ';' separated, gates ',' separated (e.g. 'X;Z;X,Z')")->required();
  sim->add_option("--qubits", cfg.qubits, "Register size (default: smallest that fits)");
  auto* shots_opt = sim->add_option("--shots", shots, "Shots per circuit");
  auto* exact_opt = sim->add_flag("--exact", cfg.exact, "Emit exact probabilities");
  shots_opt->excludes(exact_opt);
  add_common(sim);

  auto* tomo = app.add_subcommand("tomo", "Reconstruct channels from records files");
  tomo->add_option("--in", cfg.inputs, "Records files or directories")->required();
  tomo->add_option("--gates", cfg.gates, "Sequence for records files that do not name one");
  add_common(tomo);

  auto* analyze = app.add_subcommand("analyze", "CP violation, conditional and gate-dependence matrices");
  analyze->add_option("--in", cfg.inputs, "Channel files or directories")->required();
  analyze->add_option("--gates", cfg.gates, "Gate set")->default_str("H,S,T,X,Y,Z");
  analyze->add_option("--metric", cfg.metric, "diamond, avg or both")->default_val("both");
  analyze->add_option("--samples", cfg.samples, "Haar samples for the averaged distance")->default_val(100000);
  analyze->add_flag("--scale-figure", cfg.scale_figure, "Also emit display-scaled matrices");
  analyze->add_option("--histogram", cfg.histograms, "Pairs 'U,V' for per-sample distance histograms");
  analyze->add_option("--model", cfg.model, "Model whose Markovian twin gives the histogram baseline");
  auto* an_shots = analyze->add_option("--shots", shots, "Shots for the baseline (default exact)");
  add_common(analyze);

  auto* scan = app.add_subcommand("scan", "Memory-length scan over repeated gates");
  scan->add_option("--in", cfg.inputs, "Channel files or directories")->required();
  scan->add_option("--gates", cfg.gates, "Repeated gate")->default_str("CX");
  scan->add_option("--nmax", cfg.nmax, "Longest sequence")->default_val(15);
  scan->add_option("--metric", cfg.metric, "diamond, avg or both")->default_val("both");
  scan->add_option("--samples", cfg.samples, "Haar samples for the averaged distance")->default_val(100000);
  add_common(scan);

  auto* pt = app.add_subcommand("ptensor", "Relative entropy of the two-step process tensor to its Markovian product");
  pt->add_option("--model", cfg.model, "Model spec JSON")->required();
  pt->add_option("--gates", cfg.gates, "Pair 'U,V'")->default_str("X,Z");
  add_common(pt);

  auto* errs = app.add_subcommand("errors", "Shot-noise propagation or SPAM scaling");
  errs->add_option("--in", cfg.inputs, "One records file, or three (U, V, U,V)");
  errs->add_option("--model", cfg.model, "Model spec JSON for the SPAM scan");
  errs->add_option("--gates", cfg.gates, "Gate for the SPAM scan");
  errs->add_option("--trials", cfg.trials, "Monte-Carlo trials")->default_val(200);
  errs->add_option("--samples", cfg.samples, "Haar samples for the averaged distance")->default_val(100000);
  errs->add_option("--spam-grid", cfg.spam_grid, "SPAM strengths, ',' separated")
      ->default_val("0,1e-4,3e-4,1e-3,3e-3,1e-2");
  add_common(errs);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return qmem::cli::kValidation;
  }

  cfg.command = app.get_subcommands().front()->get_name();
  if (shots_opt->count() || an_shots->count()) cfg.shots = shots;

  try {
    for (const auto& p : qmem::cli::run(cfg)) std::cout << p.string() << "\n";
  } catch (const qmem::IncompleteDataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    for (const auto& m : e.missing()) std::cerr << "  missing: " << m << "\n";
    return qmem::cli::exit_code(e);
  } catch (const qmem::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return qmem::cli::exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return qmem::cli::kValidation;
  }
  return qmem::cli::kOk;
}

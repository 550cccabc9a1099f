// Command-line front end: four workflows (simulate, compare, experiment,
// check) over the spec-document + flat-artifact formats in dyadic/io.hpp.
// Exit codes: 0 all checks passed, 1 a check failed, 2 usage/config error,
// 3 the integrator could not reach the requested horizon.

#include "dyadic/diagnostics.hpp"
#include "dyadic/experiments.hpp"
#include "dyadic/integrate.hpp"
#include "dyadic/io.hpp"
#include "dyadic/model.hpp"

#include <CLI11.hpp>

#include <array>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace {

using namespace dyadic;

constexpr int kExitPass = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIntegration = 3;

// One inline flag per documented spec key; both routes feed the same
// validation in apply_spec_keys.
constexpr std::array<std::pair<const char*, const char*>, 10> kSpecFlags{{
    {"--n-shells", "n_shells"},
    {"--base", "base"},
    {"--scale", "scale"},
    {"--ic-family", "ic.family"},
    {"--ic-params", "ic.params"},
    {"--t-end", "t_end"},
    {"--tol-abs", "tol.abs"},
    {"--tol-rel", "tol.rel"},
    {"--stepper", "stepper"},
    {"--seed", "seed"},
}};

struct SpecSource {
  std::string file;
  std::array<std::string, kSpecFlags.size()> raw;
  std::array<CLI::Option*, kSpecFlags.size()> options{};
};

struct OutputOptions {
  std::string out_dir = ".";
  std::string format_name = "csv";
  bool quiet = false;
  bool verbose = false;
};

void add_spec_options(CLI::App* cmd, SpecSource& src) {
  cmd->add_option("--spec", src.file, "key=value spec document");
  for (std::size_t i = 0; i < kSpecFlags.size(); ++i) {
    src.options[i] =
        cmd->add_option(kSpecFlags[i].first, src.raw[i],
                        std::string("spec key ") + kSpecFlags[i].second);
  }
}

void add_output_options(CLI::App* cmd, OutputOptions& out) {
  cmd->add_option("--out", out.out_dir, "output directory (created if absent)");
  cmd->add_option("--format", out.format_name, "csv or jsonl");
  cmd->add_flag("-q,--quiet", out.quiet, "suppress the summary line");
  cmd->add_flag("-v,--verbose", out.verbose, "print witnesses and warnings");
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open: " + path);
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

struct EffectiveSpec {
  ExperimentSpec spec;
  Provenance prov;
};

EffectiveSpec resolve_spec(const SpecSource& src) {
  SpecKeyValues flag_kv;
  for (std::size_t i = 0; i < kSpecFlags.size(); ++i) {
    if (src.options[i] != nullptr && src.options[i]->count() > 0) {
      flag_kv.emplace_back(kSpecFlags[i].second, src.raw[i]);
    }
  }
  if (src.file.empty() && flag_kv.empty()) {
    throw ConfigError("no spec given: pass --spec FILE or inline spec flags");
  }

  EffectiveSpec eff;
  if (!src.file.empty()) {
    apply_spec_keys(eff.spec, parse_spec_text(slurp(src.file)));
    for (const auto& [key, value] : flag_kv) {
      eff.prov.overrides.push_back(key);  // flag wins over the file value
    }
  }
  apply_spec_keys(eff.spec, flag_kv);
  eff.prov.seed = eff.spec.seed;
  eff.prov.spec_digest = text_digest(render_spec(eff.spec));
  return eff;
}

FileFormat resolve_format(const OutputOptions& out) {
  const auto format = file_format_from_string(out.format_name);
  if (!format) {
    throw ConfigError("unknown format '" + out.format_name +
                      "' (expected csv or jsonl)");
  }
  return *format;
}

std::string artifact_path(const OutputOptions& out, const std::string& stem,
                          FileFormat format) {
  std::filesystem::create_directories(out.out_dir);
  return (std::filesystem::path(out.out_dir) /
          (stem + "." + to_string(format)))
      .string();
}

void print_witnesses(const std::vector<Witness>& witnesses) {
  for (const Witness& w : witnesses) {
    std::cout << "  witness: " << w.what << " (t=" << format_real(w.t)
              << ", shell=" << w.shell << ", value=" << format_real(w.value)
              << ")\n";
  }
}

Trajectory truncated_states(const Trajectory& traj, std::size_t count) {
  Trajectory out(traj.scheme, traj.config);
  out.states.assign(traj.states.begin(),
                    traj.states.begin() + static_cast<std::ptrdiff_t>(count));
  return out;
}

int run_simulate(const EffectiveSpec& eff, const OutputOptions& out) {
  const ExperimentSpec& spec = eff.spec;
  const CoefficientScheme scheme = spec.make_scheme(spec.n_shells);
  const ShellState x0 =
      make_state(0.0, build_initial(spec.ic, spec.n_shells, spec.seed));
  const IntegrationResult res =
      integrate(x0, scheme, spec.config_a, spec.t_end, spec.sample_every);

  const FileFormat format = resolve_format(out);
  const std::string path = artifact_path(out, "trajectory", format);
  write_trajectory(res.trajectory, path, format, eff.prov);

  if (!out.quiet) {
    const ShellState& last = res.trajectory.states.back();
    std::cout << "wrote " << path << ": " << res.trajectory.states.size()
              << " samples to t=" << format_real(last.t)
              << ", energy=" << format_real(energy(last)) << '\n';
  }
  if (!res.ok()) {
    std::cerr << "integration stalled at t=" << format_real(res.failure_time)
              << " (step size floor)\n";
    return kExitIntegration;
  }
  return kExitPass;
}

int run_compare(const EffectiveSpec& eff, const OutputOptions& out,
                const std::string& tol_abs_b, const std::string& tol_rel_b) {
  const ExperimentSpec& spec = eff.spec;
  const CoefficientScheme scheme = spec.make_scheme(spec.n_shells);
  const ShellState x0 =
      make_state(0.0, build_initial(spec.ic, spec.n_shells, spec.seed));
  const Real e0 = energy(x0);

  // Second leg defaults to tolerances 1e4 tighter than the first.
  IntegratorConfig config_b = spec.config_a;
  config_b.abs_tol = tol_abs_b.empty() ? spec.config_a.abs_tol * 1e-4
                                       : parse_real(tol_abs_b);
  config_b.rel_tol = tol_rel_b.empty() ? spec.config_a.rel_tol * 1e-4
                                       : parse_real(tol_rel_b);

  const IntegrationResult leg_a =
      integrate(x0, scheme, spec.config_a, spec.t_end, spec.sample_every);
  const IntegrationResult leg_b =
      integrate(x0, scheme, config_b, spec.t_end, spec.sample_every);

  // Both legs sample the same grid, so a stalled leg is a prefix of the
  // other; certify the shared part.
  const std::size_t m =
      std::min(leg_a.trajectory.states.size(), leg_b.trajectory.states.size());
  if (m < 2) {
    std::cerr << "runs share no usable sample interval\n";
    return kExitIntegration;
  }
  PairCertificateOptions opts;
  opts.slack = spec.envelope_slack;
  const PairCertificate cert =
      pair_certificate(truncated_states(leg_a.trajectory, m),
                       truncated_states(leg_b.trajectory, m), scheme, opts);

  const FileFormat format = resolve_format(out);
  const std::string path = artifact_path(out, "certificate", format);
  write_certificate(cert, path, format, eff.prov);

  const bool psi_ok = cert.max_psi <= spec.psi_pass_rel * e0;
  const bool pass = psi_ok && cert.envelope_ok;
  if (!out.quiet) {
    std::cout << "wrote " << path << ": max_psi=" << format_real(cert.max_psi)
              << " max_violation=" << format_real(cert.max_violation)
              << " envelope_ok=" << (cert.envelope_ok ? 1 : 0)
              << " pass=" << (pass ? 1 : 0) << '\n';
  }
  if (!leg_a.ok() || !leg_b.ok()) {
    std::cerr << "a leg stalled before t_end; certificate covers t<="
              << format_real(cert.times.back()) << '\n';
    return kExitIntegration;
  }
  return pass ? kExitPass : kExitCheckFailed;
}

int run_experiment_cmd(const EffectiveSpec& eff, const OutputOptions& out,
                       const std::string& kind_name) {
  const auto kind = experiment_kind_from_string(kind_name);
  if (!kind) {
    throw ConfigError("unknown experiment '" + kind_name + "'");
  }
  ExperimentSpec spec = eff.spec;
  spec.name = *kind;
  const ExperimentResult result = run_experiment(spec);

  const FileFormat format = resolve_format(out);
  const std::string path = artifact_path(out, "result", format);
  write_result(result, path, format, eff.prov);

  if (!out.quiet) {
    std::cout << "wrote " << path << ": " << to_string(result.name)
              << " pass=" << (result.pass ? 1 : 0)
              << (result.degenerate ? " (degenerate data)" : "") << '\n';
    if (out.verbose) {
      print_witnesses(result.witnesses);
    }
  }
  if (result.pass) {
    return kExitPass;
  }
  return result.status == IntegrationStatus::ok ? kExitCheckFailed
                                                : kExitIntegration;
}

int run_check(const std::string& trajectory_path, const OutputOptions& out) {
  const TrajectoryRead read = read_trajectory(trajectory_path);
  for (const std::string& warning : read.warnings) {
    std::cerr << "warning: " << warning << '\n';
  }
  if (read.trajectory.states.empty()) {
    throw ConfigError(trajectory_path + ": no samples to check");
  }
  const DiagnosticsReport report = run_diagnostics(read.trajectory);

  const FileFormat format = resolve_format(out);
  const std::string path = artifact_path(out, "report", format);
  write_report(report, path, format, Provenance{});

  const bool pass = report_pass(report);
  if (!out.quiet) {
    std::cout << "wrote " << path << ": " << report.times.size()
              << " samples, pass=" << (pass ? 1 : 0) << '\n';
    if (out.verbose && !pass) {
      std::cout << "  weak_ok=" << report.weak_energy_ok()
                << " strong_ok=" << report.strong_energy_ok()
                << " sign_ok=" << report.sign.ok()
                << " hplus_decrease_ok=" << report.h_plus.decrease_tail_ok
                << " hplus_growth_ok="
                << report.h_plus.no_growth_after_nonneg_ok
                << " simple_bound_ok=" << report.simple_bound_ok << '\n';
    }
  }
  return pass ? kExitPass : kExitCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Numerical laboratory for the dyadic cascade model: run truncations, "
      "compare tolerance pairs, and check trajectory invariants."};
  app.require_subcommand(1);

  SpecSource sim_src, cmp_src, exp_src;
  OutputOptions sim_out, cmp_out, exp_out, chk_out;
  std::string tol_abs_b, tol_rel_b;
  std::string experiment_name;
  std::string check_path;

  CLI::App* sim = app.add_subcommand(
      "simulate", "integrate one spec and write the sampled trajectory");
  add_spec_options(sim, sim_src);
  add_output_options(sim, sim_out);

  CLI::App* cmp = app.add_subcommand(
      "compare",
      "integrate one spec under two tolerance configs and write the "
      "separation certificate");
  add_spec_options(cmp, cmp_src);
  add_output_options(cmp, cmp_out);
  cmp->add_option("--tol-abs-b", tol_abs_b,
                  "second-leg absolute tolerance (default: tol.abs * 1e-4)");
  cmp->add_option("--tol-rel-b", tol_rel_b,
                  "second-leg relative tolerance (default: tol.rel * 1e-4)");

  CLI::App* exp = app.add_subcommand(
      "experiment", "run a named scenario and write its result record");
  exp->add_option("name", experiment_name,
                  "uniqueness_pair | truncation_convergence | h1_growth | "
                  "finite_negative_class_k | invariant_suite")
      ->required();
  add_spec_options(exp, exp_src);
  add_output_options(exp, exp_out);

  CLI::App* chk = app.add_subcommand(
      "check", "run every per-trajectory check on an existing trajectory file");
  chk->add_option("trajectory", check_path, "trajectory artifact (csv or jsonl)")
      ->required();
  add_output_options(chk, chk_out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);  // --help and friends
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*sim) {
      return run_simulate(resolve_spec(sim_src), sim_out);
    }
    if (*cmp) {
      return run_compare(resolve_spec(cmp_src), cmp_out, tol_abs_b, tol_rel_b);
    }
    if (*exp) {
      return run_experiment_cmd(resolve_spec(exp_src), exp_out,
                                experiment_name);
    }
    if (*chk) {
      return run_check(check_path, chk_out);
    }
  } catch (const StepFailure& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIntegration;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

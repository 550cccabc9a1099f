#include "dyadic/io.hpp"

#include <json.hpp>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <system_error>

namespace dyadic {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr std::uint64_t kFnvOffset = 14695981039346656037ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t parse_hex64(std::string_view text, const std::string& context) {
  std::uint64_t v = 0;
  const char* last = text.data() + text.size();
  const auto res = std::from_chars(text.data(), last, v, 16);
  if (res.ec != std::errc{} || res.ptr != last || text.empty()) {
    throw ParseError(context + ": not a hex digest: '" + std::string(text) +
                     "'");
  }
  return v;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
    s.remove_prefix(1);
  }
  while (!s.empty() &&
         (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string join(const std::vector<std::string>& parts, char sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i > 0) {
      out += sep;
    }
    out += parts[i];
  }
  return out;
}

std::string status_name(IntegrationStatus status) {
  return status == IntegrationStatus::ok ? "ok" : "stiffness_failure";
}

std::ofstream open_out(const std::string& path) {
  // Binary mode pins the byte stream exactly; outputs must be
  // reproducible bit-for-bit.
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot open for writing: " + path);
  }
  return out;
}

void finish_out(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) {
    throw IoError("write failed: " + path);
  }
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open: " + path);
  }
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    lines.push_back(line);
  }
  return lines;
}

std::string provenance_line(const Provenance& prov) {
  return "# spec=" + hex64(prov.spec_digest) +
         " seed=" + std::to_string(prov.seed) +
         " overrides=" + join(prov.overrides, ',');
}

ordered_json provenance_json(const char* artifact, const Provenance& prov) {
  ordered_json j;
  j["artifact"] = artifact;
  j["version"] = kArtifactVersion;
  j["spec"] = hex64(prov.spec_digest);
  j["seed"] = prov.seed;
  j["overrides"] = prov.overrides;
  return j;
}

// "# key=value key=value ..." lines of a CSV artifact header.
void collect_header_tokens(std::string_view line,
                           std::map<std::string, std::string>& out) {
  line.remove_prefix(1);  // '#'
  for (const std::string_view token : split(line, ' ')) {
    const std::string_view t = trim(token);
    if (t.empty()) {
      continue;
    }
    const std::size_t eq = t.find('=');
    if (eq == std::string_view::npos) {
      continue;  // free-form comment token
    }
    out[std::string(t.substr(0, eq))] = std::string(t.substr(eq + 1));
  }
}

const std::string& header_value(const std::map<std::string, std::string>& kv,
                                const std::string& key,
                                const std::string& path) {
  const auto it = kv.find(key);
  if (it == kv.end()) {
    throw ParseError(path + ": header is missing '" + key + "'");
  }
  return it->second;
}

CoefficientScheme scheme_from_header(Real base, Real scale, Index n,
                                     const std::string& path) {
  try {
    return {base, scale, n};
  } catch (const ConfigError& e) {
    throw ParseError(path + ": invalid scheme header: " + e.what());
  }
}

void note_digest_mismatch(std::uint64_t file_digest,
                          std::vector<std::string>& warnings) {
  const std::uint64_t assumed = config_digest(IntegratorConfig{});
  if (file_digest != assumed) {
    warnings.push_back(
        "integrator config digest mismatch (file " + hex64(file_digest) +
        ", assumed defaults " + hex64(assumed) +
        "): analysis tolerances may differ from the producer's");
  }
}

void note_version(int version, std::vector<std::string>& warnings) {
  if (version != kArtifactVersion) {
    warnings.push_back("artifact version " + std::to_string(version) +
                       " differs from this build's " +
                       std::to_string(kArtifactVersion));
  }
}

// --- trajectory CSV ---------------------------------------------------

std::string trajectory_columns(Index n) {
  std::string cols = "t";
  for (Index j = 1; j <= n; ++j) {
    cols += ",x_" + std::to_string(j);
  }
  return cols;
}

void write_trajectory_csv(const Trajectory& traj, const std::string& path,
                          const Provenance& prov) {
  std::ofstream out = open_out(path);
  const Index n = traj.scheme.n_max();
  out << "# dyadic-trajectory v" << kArtifactVersion << '\n';
  out << "# n_shells=" << n << " base=" << format_real(traj.scheme.base())
      << " scale=" << format_real(traj.scheme.scale()) << '\n';
  out << "# config=" << hex64(config_digest(traj.config)) << '\n';
  out << provenance_line(prov) << '\n';
  out << trajectory_columns(n) << '\n';
  std::string row;
  for (const ShellState& state : traj.states) {
    row = format_real(state.t);
    for (Index j = 0; j < n; ++j) {
      row += ',';
      row += format_real(state.x[j]);
    }
    row += '\n';
    out << row;
  }
  finish_out(out, path);
}

TrajectoryRead read_trajectory_csv(const std::vector<std::string>& lines,
                                   const std::string& path) {
  constexpr std::string_view kMagic = "# dyadic-trajectory v";
  if (lines.empty() || lines[0].rfind(kMagic, 0) != 0) {
    throw ParseError(path + ": not a trajectory artifact");
  }
  TrajectoryRead result{Trajectory(CoefficientScheme::dyadic_default(1), {}),
                        {}};
  int version = 0;
  {
    const std::string_view v = std::string_view(lines[0]).substr(kMagic.size());
    const auto res = std::from_chars(v.data(), v.data() + v.size(), version);
    if (res.ec != std::errc{}) {
      throw ParseError(path + ": malformed version line");
    }
  }
  note_version(version, result.warnings);

  std::map<std::string, std::string> header;
  std::size_t i = 1;
  for (; i < lines.size() && !lines[i].empty() && lines[i][0] == '#'; ++i) {
    collect_header_tokens(lines[i], header);
  }
  const Index n = static_cast<Index>(
      parse_real(header_value(header, "n_shells", path)));
  const Real base = parse_real(header_value(header, "base", path));
  const Real scale = parse_real(header_value(header, "scale", path));
  const std::uint64_t digest =
      parse_hex64(header_value(header, "config", path), path);
  note_digest_mismatch(digest, result.warnings);

  result.trajectory =
      Trajectory(scheme_from_header(base, scale, n, path), IntegratorConfig{});

  if (i >= lines.size() || lines[i] != trajectory_columns(n)) {
    throw ParseError(path + " line " + std::to_string(i + 1) +
                     ": expected column row '" + trajectory_columns(n) + "'");
  }
  ++i;

  for (; i < lines.size(); ++i) {
    const std::string where = path + " line " + std::to_string(i + 1);
    const auto fields = split(lines[i], ',');
    if (static_cast<Index>(fields.size()) != n + 1) {
      throw ParseError(where + ": expected " + std::to_string(n + 1) +
                       " fields, found " + std::to_string(fields.size()));
    }
    ShellState state;
    state.x.resize(n);
    try {
      state.t = parse_real(fields[0]);
      for (Index j = 0; j < n; ++j) {
        state.x[j] = parse_real(fields[j + 1]);
      }
    } catch (const ParseError& e) {
      throw ParseError(where + ": " + e.what());
    }
    if (!result.trajectory.states.empty() &&
        state.t < result.trajectory.states.back().t) {
      throw ParseError(where + ": time went backwards");
    }
    result.trajectory.states.push_back(std::move(state));
  }
  return result;
}

// --- trajectory JSONL -------------------------------------------------

void write_trajectory_jsonl(const Trajectory& traj, const std::string& path,
                            const Provenance& prov) {
  std::ofstream out = open_out(path);
  const Index n = traj.scheme.n_max();
  ordered_json header = provenance_json("trajectory", prov);
  header["n_shells"] = n;
  header["base"] = traj.scheme.base();
  header["scale"] = traj.scheme.scale();
  header["config"] = hex64(config_digest(traj.config));
  out << header.dump() << '\n';
  for (const ShellState& state : traj.states) {
    ordered_json row;
    row["t"] = state.t;
    ordered_json xs = ordered_json::array();
    for (Index j = 0; j < n; ++j) {
      xs.push_back(state.x[j]);
    }
    row["x"] = std::move(xs);
    out << row.dump() << '\n';
  }
  finish_out(out, path);
}

ordered_json parse_json_line(const std::string& line, const std::string& path,
                             std::size_t line_no) {
  try {
    return ordered_json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + " line " + std::to_string(line_no) + ": " +
                     e.what());
  }
}

TrajectoryRead read_trajectory_jsonl(const std::vector<std::string>& lines,
                                     const std::string& path) {
  TrajectoryRead result{Trajectory(CoefficientScheme::dyadic_default(1), {}),
                        {}};
  const ordered_json header = parse_json_line(lines[0], path, 1);
  try {
    if (header.at("artifact").get<std::string>() != "trajectory") {
      throw ParseError(path + ": not a trajectory artifact");
    }
    note_version(header.at("version").get<int>(), result.warnings);
    const Index n = header.at("n_shells").get<Index>();
    const Real base = header.at("base").get<Real>();
    const Real scale = header.at("scale").get<Real>();
    note_digest_mismatch(
        parse_hex64(header.at("config").get<std::string>(), path),
        result.warnings);
    result.trajectory = Trajectory(scheme_from_header(base, scale, n, path),
                                   IntegratorConfig{});
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + " line 1: " + e.what());
  }

  const Index n = result.trajectory.scheme.n_max();
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) {
      continue;
    }
    const std::string where = path + " line " + std::to_string(i + 1);
    const ordered_json row = parse_json_line(lines[i], path, i + 1);
    ShellState state;
    state.x.resize(n);
    try {
      state.t = row.at("t").get<Real>();
      const auto& xs = row.at("x");
      if (static_cast<Index>(xs.size()) != n) {
        throw ParseError(where + ": expected " + std::to_string(n) +
                         " components, found " + std::to_string(xs.size()));
      }
      for (Index j = 0; j < n; ++j) {
        state.x[j] = xs[static_cast<std::size_t>(j)].get<Real>();
      }
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(where + ": " + e.what());
    }
    if (!result.trajectory.states.empty() &&
        state.t < result.trajectory.states.back().t) {
      throw ParseError(where + ": time went backwards");
    }
    result.trajectory.states.push_back(std::move(state));
  }
  return result;
}

}  // namespace

// --- scalars and digests ----------------------------------------------

std::string to_string(FileFormat format) {
  return format == FileFormat::csv ? "csv" : "jsonl";
}

std::optional<FileFormat> file_format_from_string(std::string_view name) {
  if (name == "csv") {
    return FileFormat::csv;
  }
  if (name == "jsonl") {
    return FileFormat::jsonl;
  }
  return std::nullopt;
}

std::string to_string(StepperKind kind) {
  return kind == StepperKind::adaptive_rk ? "adaptive_rk" : "positivity_voc";
}

std::optional<StepperKind> stepper_from_string(std::string_view name) {
  if (name == "adaptive_rk") {
    return StepperKind::adaptive_rk;
  }
  if (name == "positivity_voc") {
    return StepperKind::positivity_voc;
  }
  return std::nullopt;
}

std::string format_real(Real value) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return {buf, res.ptr};
}

Real parse_real(std::string_view text) {
  Real v{};
  const char* last = text.data() + text.size();
  const auto res = std::from_chars(text.data(), last, v);
  if (text.empty() || res.ec != std::errc{} || res.ptr != last) {
    throw ParseError("not a number: '" + std::string(text) + "'");
  }
  return v;
}

std::uint64_t text_digest(std::string_view text) {
  std::uint64_t h = kFnvOffset;
  for (const unsigned char c : text) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

std::uint64_t config_digest(const IntegratorConfig& config) {
  const std::string canon =
      "abs_tol=" + format_real(config.abs_tol) +
      ";rel_tol=" + format_real(config.rel_tol) +
      ";dt_init=" + format_real(config.dt_init) +
      ";dt_min=" + format_real(config.dt_min) +
      ";dt_max=" + format_real(config.dt_max) +
      ";stiffness_cap_factor=" + format_real(config.stiffness_cap_factor) +
      ";stepper=" + to_string(config.scheme_choice) +
      ";positivity_floor=" + format_real(config.positivity_floor) +
      ";fixed_dt=" + format_real(config.fixed_dt);
  return text_digest(canon);
}

// --- trajectories -------------------------------------------------------

void write_trajectory(const Trajectory& traj, const std::string& path,
                      FileFormat format, const Provenance& prov) {
  if (format == FileFormat::csv) {
    write_trajectory_csv(traj, path, prov);
  } else {
    write_trajectory_jsonl(traj, path, prov);
  }
}

TrajectoryRead read_trajectory(const std::string& path) {
  const std::vector<std::string> lines = read_lines(path);
  if (lines.empty() || lines[0].empty()) {
    throw ParseError(path + ": empty file");
  }
  if (lines[0][0] == '{') {
    return read_trajectory_jsonl(lines, path);
  }
  if (lines[0][0] == '#') {
    return read_trajectory_csv(lines, path);
  }
  throw ParseError(path + ": unrecognized artifact format");
}

// --- certificates -------------------------------------------------------

void write_certificate(const PairCertificate& cert, const std::string& path,
                       FileFormat format, const Provenance& prov) {
  const Index n = cert.dimension();
  const std::size_t m = cert.times.size();
  if (format == FileFormat::csv) {
    std::ofstream out = open_out(path);
    out << "# dyadic-certificate v" << kArtifactVersion << '\n';
    out << "# n_shells=" << n
        << " k_constant=" << format_real(cert.k_constant)
        << " slack=" << format_real(cert.slack) << '\n';
    out << provenance_line(prov) << '\n';
    out << "# summary max_psi=" << format_real(cert.max_psi)
        << " max_violation=" << format_real(cert.max_violation)
        << " envelope_ok=" << (cert.envelope_ok ? 1 : 0) << " samples=" << m
        << '\n';
    std::string cols = "t";
    for (Index j = 1; j <= n; ++j) {
      cols += ",psi_" + std::to_string(j);
    }
    out << cols << ",a,envelope,violation\n";
    for (std::size_t i = 0; i < m; ++i) {
      std::string row = format_real(cert.times[i]);
      for (Index j = 0; j < n; ++j) {
        row += ',';
        row += format_real(cert.psi[i][j]);
      }
      const Real psi_n = n > 0 ? cert.psi[i][n - 1] : 0.0;
      row += ',';
      row += format_real(cert.a[i]);
      row += ',';
      row += format_real(cert.envelope[i]);
      row += ',';
      row += format_real(psi_n - cert.envelope[i]);
      row += '\n';
      out << row;
    }
    finish_out(out, path);
  } else {
    std::ofstream out = open_out(path);
    ordered_json header = provenance_json("certificate", prov);
    header["n_shells"] = n;
    header["k_constant"] = cert.k_constant;
    header["slack"] = cert.slack;
    out << header.dump() << '\n';
    for (std::size_t i = 0; i < m; ++i) {
      ordered_json row;
      row["t"] = cert.times[i];
      ordered_json psi = ordered_json::array();
      for (Index j = 0; j < n; ++j) {
        psi.push_back(cert.psi[i][j]);
      }
      row["psi"] = std::move(psi);
      const Real psi_n = n > 0 ? cert.psi[i][n - 1] : 0.0;
      row["a"] = cert.a[i];
      row["envelope"] = cert.envelope[i];
      row["violation"] = psi_n - cert.envelope[i];
      out << row.dump() << '\n';
    }
    ordered_json summary;
    summary["summary"] = true;
    summary["max_psi"] = cert.max_psi;
    summary["max_violation"] = cert.max_violation;
    summary["envelope_ok"] = cert.envelope_ok;
    summary["samples"] = m;
    out << summary.dump() << '\n';
    finish_out(out, path);
  }
}

// --- check reports --------------------------------------------------------

bool report_pass(const DiagnosticsReport& report) {
  return report.weak_energy_ok() && report.strong_energy_ok() &&
         report.sign.ok() && report.h_plus.decrease_tail_ok &&
         report.h_plus.no_growth_after_nonneg_ok && report.simple_bound_ok;
}

namespace {

Real flux_residual_max(const DiagnosticsReport& report, std::size_t i) {
  return report.flux_residuals[i].size() == 0
             ? 0.0
             : report.flux_residuals[i].abs().maxCoeff();
}

}  // namespace

void write_report(const DiagnosticsReport& report, const std::string& path,
                  FileFormat format, const Provenance& prov) {
  const std::size_t m = report.times.size();
  const bool pass = report_pass(report);
  if (format == FileFormat::csv) {
    std::ofstream out = open_out(path);
    out << "# dyadic-report v" << kArtifactVersion << '\n';
    out << provenance_line(prov) << '\n';
    out << "# summary weak_ok=" << (report.weak_energy_ok() ? 1 : 0)
        << " strong_ok=" << (report.strong_energy_ok() ? 1 : 0)
        << " sign_ok=" << (report.sign.ok() ? 1 : 0)
        << " hplus_decrease_ok=" << (report.h_plus.decrease_tail_ok ? 1 : 0)
        << " hplus_growth_ok="
        << (report.h_plus.no_growth_after_nonneg_ok ? 1 : 0)
        << " simple_bound_ok=" << (report.simple_bound_ok ? 1 : 0)
        << " pass=" << (pass ? 1 : 0) << " samples=" << m << '\n';
    out << "t,energy,h1_sq,a,flux_residual_max,min_component\n";
    for (std::size_t i = 0; i < m; ++i) {
      out << format_real(report.times[i]) << ','
          << format_real(report.energy[i]) << ','
          << format_real(report.h1_sq[i]) << ','
          << format_real(report.a_value[i]) << ','
          << format_real(flux_residual_max(report, i)) << ','
          << format_real(report.min_component[i]) << '\n';
    }
    finish_out(out, path);
  } else {
    std::ofstream out = open_out(path);
    out << provenance_json("report", prov).dump() << '\n';
    for (std::size_t i = 0; i < m; ++i) {
      ordered_json row;
      row["t"] = report.times[i];
      row["energy"] = report.energy[i];
      row["h1_sq"] = report.h1_sq[i];
      row["a"] = report.a_value[i];
      row["flux_residual_max"] = flux_residual_max(report, i);
      row["min_component"] = report.min_component[i];
      out << row.dump() << '\n';
    }
    ordered_json summary;
    summary["summary"] = true;
    summary["weak_ok"] = report.weak_energy_ok();
    summary["strong_ok"] = report.strong_energy_ok();
    summary["sign_ok"] = report.sign.ok();
    summary["hplus_decrease_ok"] = report.h_plus.decrease_tail_ok;
    summary["hplus_growth_ok"] = report.h_plus.no_growth_after_nonneg_ok;
    summary["simple_bound_ok"] = report.simple_bound_ok;
    summary["pass"] = pass;
    summary["samples"] = m;
    out << summary.dump() << '\n';
    finish_out(out, path);
  }
}

// --- experiment results -----------------------------------------------

namespace {

std::string witness_text(const Witness& w) {
  // Whats are comma-free by convention; enforce so the CSV stays flat.
  std::string what = w.what;
  for (char& c : what) {
    if (c == ',') {
      c = ';';
    }
  }
  return what + "; t=" + format_real(w.t) +
         "; shell=" + std::to_string(w.shell) +
         "; value=" + format_real(w.value);
}

template <typename T, typename Fn>
std::string join_mapped(const std::vector<T>& values, Fn&& render) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i > 0) {
      out += ';';
    }
    out += render(values[i]);
  }
  return out;
}

}  // namespace

void write_result(const ExperimentResult& result, const std::string& path,
                  FileFormat format, const Provenance& prov) {
  if (format == FileFormat::csv) {
    std::ofstream out = open_out(path);
    out << "# dyadic-result v" << kArtifactVersion << '\n';
    out << provenance_line(prov) << '\n';
    out << "key,value\n";
    out << "experiment," << to_string(result.name) << '\n';
    out << "pass," << (result.pass ? 1 : 0) << '\n';
    out << "degenerate," << (result.degenerate ? 1 : 0) << '\n';
    out << "status," << status_name(result.status) << '\n';
    out << "failure_time," << format_real(result.failure_time) << '\n';
    out << "max_psi," << format_real(result.max_psi) << '\n';
    out << "max_violation," << format_real(result.max_violation) << '\n';
    out << "energy_drift," << format_real(result.energy_drift) << '\n';
    out << "growth_factor," << format_real(result.growth_factor) << '\n';
    out << "growth_time," << format_real(result.growth_time) << '\n';
    out << "h1_ceiling," << format_real(result.h1_ceiling) << '\n';
    out << "a_max," << format_real(result.a_max) << '\n';
    out << "convergence_gaps,"
        << join_mapped(result.convergence_gaps,
                       [](Real v) { return format_real(v); })
        << '\n';
    out << "leg_horizons,"
        << join_mapped(result.leg_horizons,
                       [](Real v) { return format_real(v); })
        << '\n';
    out << "leg_completed,"
        << join_mapped(result.leg_completed,
                       [](bool b) { return std::string(b ? "1" : "0"); })
        << '\n';
    out << "witness_count," << result.witnesses.size() << '\n';
    for (std::size_t i = 0; i < result.witnesses.size(); ++i) {
      out << "witness_" << (i + 1) << ',' << witness_text(result.witnesses[i])
          << '\n';
    }
    for (std::size_t i = 0; i < result.data_files.size(); ++i) {
      out << "data_file_" << (i + 1) << ',' << result.data_files[i] << '\n';
    }
    finish_out(out, path);
  } else {
    std::ofstream out = open_out(path);
    out << provenance_json("result", prov).dump() << '\n';
    ordered_json j;
    j["experiment"] = to_string(result.name);
    j["pass"] = result.pass;
    j["degenerate"] = result.degenerate;
    j["status"] = status_name(result.status);
    j["failure_time"] = result.failure_time;  // NaN renders as null
    j["max_psi"] = result.max_psi;
    j["max_violation"] = result.max_violation;
    j["energy_drift"] = result.energy_drift;
    j["growth_factor"] = result.growth_factor;
    j["growth_time"] = result.growth_time;
    j["h1_ceiling"] = result.h1_ceiling;
    j["a_max"] = result.a_max;
    j["convergence_gaps"] = result.convergence_gaps;
    j["leg_horizons"] = result.leg_horizons;
    j["leg_completed"] = result.leg_completed;
    ordered_json witnesses = ordered_json::array();
    for (const Witness& w : result.witnesses) {
      ordered_json wj;
      wj["what"] = w.what;
      wj["t"] = w.t;
      wj["shell"] = w.shell;
      wj["value"] = w.value;
      witnesses.push_back(std::move(wj));
    }
    j["witnesses"] = std::move(witnesses);
    j["data_files"] = result.data_files;
    out << j.dump() << '\n';
    finish_out(out, path);
  }
}

// --- run-spec documents -----------------------------------------------

SpecKeyValues parse_spec_text(std::string_view text) {
  SpecKeyValues out;
  std::size_t line_no = 0;
  for (const std::string_view raw : split(text, '\n')) {
    ++line_no;
    const std::string_view line = trim(raw);
    if (line.empty() || line[0] == '#') {
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ParseError("line " + std::to_string(line_no) +
                       ": expected key=value, got '" + std::string(line) +
                       "'");
    }
    const std::string key{trim(line.substr(0, eq))};
    const std::string value{trim(line.substr(eq + 1))};
    if (key.empty()) {
      throw ParseError("line " + std::to_string(line_no) + ": empty key");
    }
    if (value.empty()) {
      throw ParseError("line " + std::to_string(line_no) +
                       ": empty value for key '" + key + "'");
    }
    for (const auto& [k, v] : out) {
      if (k == key) {
        throw ParseError("line " + std::to_string(line_no) +
                         ": duplicate key '" + key + "'");
      }
    }
    out.emplace_back(key, value);
  }
  return out;
}

namespace {

Real spec_real(const std::string& key, const std::string& value) {
  try {
    return parse_real(value);
  } catch (const ParseError&) {
    throw ConfigError("key '" + key + "': not a number: '" + value + "'");
  }
}

Real spec_positive_real(const std::string& key, const std::string& value) {
  const Real v = spec_real(key, value);
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw ConfigError("key '" + key + "': must be positive and finite, got '" +
                      value + "'");
  }
  return v;
}

std::int64_t spec_integer(const std::string& key, std::string_view value,
                          std::int64_t min_value) {
  std::int64_t v = 0;
  const char* last = value.data() + value.size();
  const auto res = std::from_chars(value.data(), last, v);
  if (value.empty() || res.ec != std::errc{} || res.ptr != last ||
      v < min_value) {
    throw ConfigError("key '" + key + "': expected an integer >= " +
                      std::to_string(min_value) + ", got '" +
                      std::string(value) + "'");
  }
  return v;
}

std::uint64_t spec_u64(const std::string& key, std::string_view value) {
  std::uint64_t v = 0;
  const char* last = value.data() + value.size();
  const auto res = std::from_chars(value.data(), last, v);
  if (value.empty() || res.ec != std::errc{} || res.ptr != last) {
    throw ConfigError("key '" + key + "': expected an unsigned integer, got '" +
                      std::string(value) + "'");
  }
  return v;
}

void apply_ic_params(InitialCondition& ic, const std::string& value) {
  static const std::string key = "ic.params";
  std::vector<std::string> parts;
  for (const std::string_view p : split(value, ',')) {
    parts.emplace_back(trim(p));
  }
  const auto arity_error = [&](const char* expected) {
    throw ConfigError("key '" + key + "': " + expected + ", got '" + value +
                      "'");
  };
  switch (ic.family) {
    case InitialCondition::Family::unit_shell:
      if (parts.size() < 1 || parts.size() > 2) {
        arity_error("unit_shell expects j[,negate_count]");
      }
      ic.unit_index = spec_integer(key, parts[0], 1);
      ic.negate_first = parts.size() > 1 ? spec_integer(key, parts[1], 0) : 0;
      break;
    case InitialCondition::Family::geometric:
      if (parts.size() < 2 || parts.size() > 3) {
        arity_error("geometric expects ratio,support[,negate_count]");
      }
      ic.ratio = spec_real(key, parts[0]);
      if (!(ic.ratio > 0.0) || ic.ratio > 1.0) {
        throw ConfigError("key '" + key + "': ratio must lie in (0, 1], got '" +
                          parts[0] + "'");
      }
      ic.n_support = spec_integer(key, parts[1], 0);
      ic.negate_first = parts.size() > 2 ? spec_integer(key, parts[2], 0) : 0;
      break;
    case InitialCondition::Family::random_positive:
      if (parts.size() < 1 || parts.size() > 2) {
        arity_error("random_positive expects support[,negate_count]");
      }
      ic.n_support = spec_integer(key, parts[0], 0);
      ic.negate_first = parts.size() > 1 ? spec_integer(key, parts[1], 0) : 0;
      break;
  }
}

}  // namespace

void apply_spec_keys(ExperimentSpec& spec, const SpecKeyValues& keys) {
  // ic.params is interpreted by family, so it is applied after every other
  // key; document order cannot change its meaning.
  const std::string* params = nullptr;
  for (const auto& [key, value] : keys) {
    if (key == "n_shells") {
      spec.n_shells = static_cast<Index>(spec_integer(key, value, 1));
    } else if (key == "base") {
      spec.base = spec_positive_real(key, value);
    } else if (key == "scale") {
      spec.scale = spec_positive_real(key, value);
    } else if (key == "ic.family") {
      if (value == "unit_shell") {
        spec.ic.family = InitialCondition::Family::unit_shell;
      } else if (value == "geometric") {
        spec.ic.family = InitialCondition::Family::geometric;
      } else if (value == "random_positive") {
        spec.ic.family = InitialCondition::Family::random_positive;
      } else {
        throw ConfigError(
            "key 'ic.family': unknown family '" + value +
            "' (expected unit_shell, geometric, or random_positive)");
      }
    } else if (key == "ic.params") {
      params = &value;
    } else if (key == "t_end") {
      spec.t_end = spec_positive_real(key, value);
    } else if (key == "tol.abs") {
      spec.config_a.abs_tol = spec_positive_real(key, value);
    } else if (key == "tol.rel") {
      spec.config_a.rel_tol = spec_positive_real(key, value);
    } else if (key == "stepper") {
      const auto kind = stepper_from_string(value);
      if (!kind) {
        throw ConfigError("key 'stepper': unknown stepper '" + value +
                          "' (expected adaptive_rk or positivity_voc)");
      }
      spec.config_a.scheme_choice = *kind;
    } else if (key == "seed") {
      spec.seed = spec_u64(key, value);
    } else {
      throw ConfigError("unknown spec key '" + key + "'");
    }
  }
  if (params != nullptr) {
    apply_ic_params(spec.ic, *params);
  }
  // The coefficient cap k_n <= scale*2^n is violated exactly when the
  // per-shell growth exceeds 2.
  try {
    (void)CoefficientScheme(spec.base, spec.scale, 1);
  } catch (const ConfigError& e) {
    throw ConfigError("key 'base': " + std::string(e.what()));
  }
}

std::string render_spec(const ExperimentSpec& spec) {
  std::string params;
  switch (spec.ic.family) {
    case InitialCondition::Family::unit_shell:
      params = std::to_string(spec.ic.unit_index) + "," +
               std::to_string(spec.ic.negate_first);
      break;
    case InitialCondition::Family::geometric:
      params = format_real(spec.ic.ratio) + "," +
               std::to_string(spec.ic.n_support) + "," +
               std::to_string(spec.ic.negate_first);
      break;
    case InitialCondition::Family::random_positive:
      params = std::to_string(spec.ic.n_support) + "," +
               std::to_string(spec.ic.negate_first);
      break;
  }
  std::string family;
  switch (spec.ic.family) {
    case InitialCondition::Family::unit_shell: family = "unit_shell"; break;
    case InitialCondition::Family::geometric: family = "geometric"; break;
    case InitialCondition::Family::random_positive:
      family = "random_positive";
      break;
  }
  return "n_shells=" + std::to_string(spec.n_shells) + "\n" +
         "base=" + format_real(spec.base) + "\n" +
         "scale=" + format_real(spec.scale) + "\n" +
         "ic.family=" + family + "\n" +
         "ic.params=" + params + "\n" +
         "t_end=" + format_real(spec.t_end) + "\n" +
         "tol.abs=" + format_real(spec.config_a.abs_tol) + "\n" +
         "tol.rel=" + format_real(spec.config_a.rel_tol) + "\n" +
         "stepper=" + to_string(spec.config_a.scheme_choice) + "\n" +
         "seed=" + std::to_string(spec.seed) + "\n";
}

}  // namespace dyadic

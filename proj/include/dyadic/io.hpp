#pragma once

// Flat-file artifacts (trajectories, check reports, pair certificates,
// experiment results) in CSV or JSONL, plus the key=value run-spec document.
// Writers are deterministic byte-for-byte: floats are rendered as the
// shortest decimal that parses back to the identical bits (at most 17
// significant digits) and key order is fixed. Readers reject malformed
// input with the offending line number in the message.

#include "dyadic/diagnostics.hpp"
#include "dyadic/experiments.hpp"
#include "dyadic/integrate.hpp"
#include "dyadic/model.hpp"

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace dyadic {

/// Bumped whenever an on-disk schema changes shape.
inline constexpr int kArtifactVersion = 1;

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class FileFormat { csv, jsonl };

[[nodiscard]] std::string to_string(FileFormat format);
[[nodiscard]] std::optional<FileFormat> file_format_from_string(
    std::string_view name);

[[nodiscard]] std::string to_string(StepperKind kind);
[[nodiscard]] std::optional<StepperKind> stepper_from_string(
    std::string_view name);

/// Shortest decimal rendering that parses back to the same bits.
[[nodiscard]] std::string format_real(Real value);

/// Strict full-string parse of one decimal value; throws ParseError.
[[nodiscard]] Real parse_real(std::string_view text);

/// FNV-1a over the bytes; the digest stamped into artifact headers.
[[nodiscard]] std::uint64_t text_digest(std::string_view text);

/// Digest of the integrator knobs that shaped a trajectory. Stored in
/// trajectory headers so a reader can tell whether its assumed tolerances
/// match the producer's.
[[nodiscard]] std::uint64_t config_digest(const IntegratorConfig& config);

/// Reproducibility stamp carried in every artifact header.
struct Provenance {
  std::uint64_t spec_digest = 0;  ///< digest of the effective run spec
  std::uint64_t seed = 0;
  std::vector<std::string> overrides;  ///< spec keys overridden by flags
};

void write_trajectory(const Trajectory& traj, const std::string& path,
                      FileFormat format, const Provenance& prov = {});

struct TrajectoryRead {
  Trajectory trajectory;
  std::vector<std::string> warnings;
};

/// Reads either format, detected from the first byte. The file stores only
/// the digest of the producing integrator config, not the config itself;
/// the returned trajectory carries defaults and a warning when the digest
/// disagrees.
[[nodiscard]] TrajectoryRead read_trajectory(const std::string& path);

/// Row schema: t, psi_1..psi_N, a, envelope, violation (= psi_N - G).
void write_certificate(const PairCertificate& cert, const std::string& path,
                       FileFormat format, const Provenance& prov = {});

/// The aggregate flag embedded in report summaries: every boolean check
/// (energy monotonicity both ways, sign persistence, the tail lemmas, the
/// simple bound) holds.
[[nodiscard]] bool report_pass(const DiagnosticsReport& report);

/// Row schema: t, energy, h1_sq, a, flux_residual_max, min_component.
/// The summary carries the check flags. An empty report writes only the
/// header.
void write_report(const DiagnosticsReport& report, const std::string& path,
                  FileFormat format, const Provenance& prov = {});

/// Key/value records of every metric, pass flag, and witness.
void write_result(const ExperimentResult& result, const std::string& path,
                  FileFormat format, const Provenance& prov = {});

// --- run-spec documents ---------------------------------------------------

/// Ordered key=value pairs from one spec document ('#' comments and blank
/// lines allowed; duplicate keys rejected).
using SpecKeyValues = std::vector<std::pair<std::string, std::string>>;

/// Syntax pass over the document text. Errors name the line.
[[nodiscard]] SpecKeyValues parse_spec_text(std::string_view text);

/// Semantic pass: applies the documented flat keys (n_shells, base, scale,
/// ic.family, ic.params, t_end, tol.abs, tol.rel, stepper, seed) onto a
/// spec. Unknown keys, type mismatches, and constraint violations throw
/// ConfigError naming the key. ic.params is family-specific:
///   unit_shell      j[,negate_count]
///   geometric       ratio,support[,negate_count]
///   random_positive support[,negate_count]
void apply_spec_keys(ExperimentSpec& spec, const SpecKeyValues& keys);

/// Canonical rendering of the effective spec: the documented keys in fixed
/// order, one per line. text_digest of this string is the spec_digest
/// stamped into artifact provenance.
[[nodiscard]] std::string render_spec(const ExperimentSpec& spec);

}  // namespace dyadic

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nillab/diagnostics.hpp"
#include "nillab/towers.hpp"

namespace nillab {

// Error taxonomy mirrored by the command-line exit codes: bad input or an
// inconsistent run description (2), a numerical method failing to converge
// during a run (3), a tower construction failure (4).
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConstructionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Algebra spec text format, one directive per line, '#' comments:
//   dim N
//   step K            (optional, validated against the computed step)
//   c i j s num den   (1-based indices, [E_i, E_j] += (num/den) E_s)
// Entries with i > j are folded by antisymmetry; a conflicting pair is a
// validation error. Errors carry "path:line:" prefixes where applicable.
std::shared_ptr<const LieAlgebra> load_algebra_spec(const std::string& path);

struct AlgebraCheck {
  int dim = 0;
  int step = 0;
  std::vector<int> series_dims;
  std::string report;  // human-readable pass summary
};

// Loads and fully validates a spec (construction re-checks antisymmetry,
// Jacobi, nilpotency and the adapted-basis property). Throws ValidationError.
AlgebraCheck check_algebra_spec(const std::string& path);

// Overrides applied on top of a manifest (command-line flags).
struct ManifestOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> samples;
  std::optional<std::string> out_dir;
};

struct RunOutputs {
  std::uint64_t manifest_hash = 0;
  std::vector<std::string> files;  // paths written, csv then meta per job
};

// Executes every job of a run manifest (JSON, see README for the schema):
// shared flow blocks, per-job estimator parameters, one <name>.csv plus
// <name>.meta.json per job, every file stamped with the manifest hash.
// Validation of all jobs happens before any computation starts.
RunOutputs run_manifest_file(const std::string& path, const ManifestOverrides& ov);

// Builds the maximal tower described by a tower manifest (algebra path, X,
// seed, out) and writes <name>.tower.json + <name>.meta.json.
RunOutputs tower_build_file(const std::string& path, const ManifestOverrides& ov);

// Hash of the manifest bytes combined with the effective seed/samples/out,
// recorded in every output of the run.
std::uint64_t manifest_hash(const std::string& file_bytes, std::uint64_t seed,
                            int samples, const std::string& out_dir);

}  // namespace nillab

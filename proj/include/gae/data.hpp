#pragma once

#include "gae/graph.hpp"

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace gae {

enum class Split { train, val, test };

std::string to_string(Split s);

/// A set of same-mesh field snapshots. Multiple trajectories (Reynolds
/// tags) may be pooled into one set; times are strictly increasing within
/// each tag, and u_in is carried per snapshot for the RMSE normalization.
struct SnapshotSet {
  std::vector<Mat> snapshots;  // each nodes x features
  std::vector<double> times;
  std::vector<double> re;      // per snapshot
  std::vector<double> u_in;    // per snapshot
  double dt = 0.;
  Split split = Split::train;

  std::size_t size() const { return snapshots.size(); }
  Index nodes() const { return snapshots.empty() ? 0 : snapshots.front().rows(); }
  Index features() const { return snapshots.empty() ? 0 : snapshots.front().cols(); }
};

void validate(const SnapshotSet& set);

/// Concatenate sets over the same mesh (e.g. trajectories at different
/// Reynolds numbers); keeps the first set's dt and split label.
SnapshotSet concat_sets(const std::vector<SnapshotSet>& sets);

struct MeshParams {
  Index nc = 2000;  // exact cell count of the generated mesh
};

struct FlowParams {
  double re = 1000.;             // freestream u_in = re * 1e-4
  double vortex_gamma = -1.;     // circulation; negative = 1.206 * u_in, 0 = freestream only
  double core_radius = 0.35;     // Lamb-Oseen core radius
  double convection_speed = -1.; // vortex train speed; negative = 0.55 * u_in
  double dt = -1.;               // snapshot spacing; negative = 1 / (8 * convection_speed)
};

/// Flow constants after defaults are resolved against the Reynolds number.
struct ResolvedFlow {
  double u_in, gamma, core_radius, convection_speed, dt;
};

ResolvedFlow resolve_flow(const FlowParams& p);

/// Backward-facing-step point cloud (jittered graded grid, exactly
/// mesh.nc cells) with an analytic unsteady field: uniform freestream plus
/// a staggered train of counter-rotating Lamb-Oseen vortices advecting
/// downstream at the convection speed. Deterministic in seed.
std::pair<MeshInput, SnapshotSet> generate_synthetic(const MeshParams& mesh,
                                                     const FlowParams& flow, int m,
                                                     std::uint64_t seed);

/// Sample the analytic velocity field at arbitrary points and time.
Mat sample_flow(const ResolvedFlow& flow, const Mat& points, double t);

/// points.csv, faces.csv, snap_0000.csv..., meta.csv under dir (created).
void write_dataset(const std::string& dir, const MeshInput& mesh, const SnapshotSet& set);

/// Load a dataset directory written by write_dataset (or shaped like it).
std::pair<MeshInput, SnapshotSet> load_snapshots(const std::string& dir);

/// Per-feature affine standardization fitted on the training split only.
struct Standardizer {
  Mat mean, std;   // 1 x features each; std floored at 1e-12
  double u_in = 0.;

  static Standardizer fit(const SnapshotSet& train);

  Mat apply_rows(const Mat& x) const;
  Mat invert_rows(const Mat& x) const;
  SnapshotSet apply(const SnapshotSet& set) const;
  SnapshotSet invert(const SnapshotSet& set) const;

  void save(const std::string& path) const;
  static Standardizer load(const std::string& path);
};

/// x' = (x - mean)/std per feature; stats from `stats` when given, else
/// fitted from `set` (which must be the training split).
std::pair<SnapshotSet, Standardizer> standardize(const SnapshotSet& set,
                                                 const std::optional<Standardizer>& stats);

/// Seeded uniform split without replacement; val gets floor(fraction * M)
/// snapshots and both halves stay time-ordered within each trajectory.
std::pair<SnapshotSet, SnapshotSet> split_train_val(const SnapshotSet& set, double val_fraction,
                                                    std::uint64_t seed);

}  // namespace gae

#include "gae/data.hpp"

#include "gae/csv.hpp"
#include "gae/error.hpp"
#include "gae/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <numeric>
#include <string>

namespace gae {

namespace fs = std::filesystem;

namespace {
constexpr double kPi = 3.14159265358979323846;
}

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    default: return "test";
  }
}

void validate(const SnapshotSet& set) {
  const std::size_t m = set.snapshots.size();
  if (set.times.size() != m || set.re.size() != m || set.u_in.size() != m)
    throw UsageError("snapshot set metadata lengths do not match the snapshot count");
  for (std::size_t i = 0; i < m; ++i) {
    if (set.snapshots[i].rows() != set.nodes() || set.snapshots[i].cols() != set.features())
      throw UsageError("snapshot " + std::to_string(i) + " has mismatched dimensions");
    if (!set.snapshots[i].allFinite())
      throw UsageError("snapshot " + std::to_string(i) + " contains non-finite values");
  }
  std::map<double, double> last_time;
  for (std::size_t i = 0; i < m; ++i) {
    const auto it = last_time.find(set.re[i]);
    if (it != last_time.end() && !(set.times[i] > it->second))
      throw UsageError("snapshot times must be strictly increasing within a trajectory");
    last_time[set.re[i]] = set.times[i];
  }
}

SnapshotSet concat_sets(const std::vector<SnapshotSet>& sets) {
  if (sets.empty()) throw UsageError("cannot concatenate zero snapshot sets");
  SnapshotSet out;
  out.dt = sets.front().dt;
  out.split = sets.front().split;
  for (const auto& s : sets) {
    out.snapshots.insert(out.snapshots.end(), s.snapshots.begin(), s.snapshots.end());
    out.times.insert(out.times.end(), s.times.begin(), s.times.end());
    out.re.insert(out.re.end(), s.re.begin(), s.re.end());
    out.u_in.insert(out.u_in.end(), s.u_in.begin(), s.u_in.end());
  }
  validate(out);
  return out;
}

ResolvedFlow resolve_flow(const FlowParams& p) {
  if (!(p.re > 0.)) throw ConfigError("Reynolds tag must be positive");
  if (!(p.core_radius > 0.)) throw ConfigError("vortex core radius must be positive");
  ResolvedFlow f;
  f.u_in = p.re * 1e-4;
  f.gamma = p.vortex_gamma < 0. ? 1.206 * f.u_in : p.vortex_gamma;
  f.core_radius = p.core_radius;
  f.convection_speed = p.convection_speed < 0. ? 0.55 * f.u_in : p.convection_speed;
  if (!(f.convection_speed > 0.)) throw ConfigError("vortex convection speed must be positive");
  f.dt = p.dt < 0. ? 1.0 / (8.0 * f.convection_speed) : p.dt;
  if (!(f.dt > 0.)) throw ConfigError("snapshot spacing dt must be positive");
  return f;
}

Mat sample_flow(const ResolvedFlow& flow, const Mat& points, double t) {
  if (points.cols() != 2) throw UsageError("flow sampling expects N x 2 points");
  Mat u(points.rows(), 2);
  u.col(0).setConstant(flow.u_in);
  u.col(1).setZero();
  if (flow.gamma == 0.) return u;

  const double rc2 = flow.core_radius * flow.core_radius;
  // Staggered train of counter-rotating vortices shed at the step and
  // translating rigidly downstream; the superposition stays solenoidal.
  for (int j = -9; j <= 2; ++j) {
    const double cx = 0.4 + 1.0 * j + flow.convection_speed * t;
    const bool even = ((j % 2) + 2) % 2 == 0;
    const double cy = even ? 1.1 : 0.9;
    const double gamma = even ? flow.gamma : -flow.gamma;
    for (Index i = 0; i < points.rows(); ++i) {
      const double dx = points(i, 0) - cx;
      const double dy = points(i, 1) - cy;
      const double r2 = dx * dx + dy * dy;
      // u_theta = gamma/(2 pi r) (1 - exp(-r^2/rc^2)); smooth at the core.
      const double factor = r2 < 1e-30 ? gamma / (2.0 * kPi * rc2)
                                       : gamma * (1.0 - std::exp(-r2 / rc2)) / (2.0 * kPi * r2);
      u(i, 0) -= dy * factor;
      u(i, 1) += dx * factor;
    }
  }
  return u;
}

std::pair<MeshInput, SnapshotSet> generate_synthetic(const MeshParams& mesh,
                                                     const FlowParams& flow, int m,
                                                     std::uint64_t seed) {
  if (mesh.nc < 16) throw ConfigError("synthetic mesh needs at least 16 cells");
  if (m < 1) throw ConfigError("need at least one snapshot");
  const ResolvedFlow rf = resolve_flow(flow);
  Rng rng(seed);

  // Backward-facing step: inlet block above the step joins a full-height
  // downstream block at x = 0, sharing the upper row spacing exactly.
  const Index ny_a = std::max<Index>(4, static_cast<Index>(std::lround(
                                            std::sqrt(static_cast<double>(mesh.nc) / 8.0))));
  const Index ny_b = 2 * ny_a;
  const double hy = 1.0 / static_cast<double>(ny_a);

  struct Cell {
    double x, y, hx;
  };
  std::vector<Cell> cells;
  std::vector<std::pair<Index, Index>> faces;

  const Index nx_a = std::max<Index>(2, static_cast<Index>(std::ceil(2.0 / (1.3 * hy))));
  const double ha = 2.0 / static_cast<double>(nx_a);
  for (Index i = 0; i < nx_a; ++i)
    for (Index j = 0; j < ny_a; ++j)
      cells.push_back({-2.0 + (static_cast<double>(i) + 0.5) * ha,
                       1.0 + (static_cast<double>(j) + 0.5) * hy, ha});
  const Index count_a = nx_a * ny_a;

  // Downstream columns: refined behind the step, geometric growth capped at
  // 1.6 rows of spacing; extra columns extend past x = 8 until the target
  // cell count is reached.
  std::vector<double> col_x, col_h;
  {
    double x = 0., h = 0.8 * hy;
    while (x < 8.0 || count_a + static_cast<Index>(col_x.size()) * ny_b < mesh.nc) {
      col_x.push_back(x + 0.5 * h);
      col_h.push_back(h);
      x += h;
      h = std::min(h * 1.035, 1.6 * hy);
      if (col_x.size() > 1000000) throw ConfigError("synthetic mesh generation ran away");
    }
  }
  const Index nx_b = static_cast<Index>(col_x.size());
  for (Index c = 0; c < nx_b; ++c)
    for (Index j = 0; j < ny_b; ++j)
      cells.push_back({col_x[static_cast<std::size_t>(c)],
                       (static_cast<double>(j) + 0.5) * hy, col_h[static_cast<std::size_t>(c)]});

  // Grid-topology faces; pairs referencing trimmed tail cells drop out.
  auto a_id = [&](Index i, Index j) { return i * ny_a + j; };
  auto b_id = [&](Index c, Index j) { return count_a + c * ny_b + j; };
  for (Index i = 0; i < nx_a; ++i)
    for (Index j = 0; j < ny_a; ++j) {
      if (j + 1 < ny_a) faces.emplace_back(a_id(i, j), a_id(i, j + 1));
      if (i + 1 < nx_a) faces.emplace_back(a_id(i, j), a_id(i + 1, j));
    }
  for (Index j = 0; j < ny_a; ++j) faces.emplace_back(a_id(nx_a - 1, j), b_id(0, ny_a + j));
  for (Index c = 0; c < nx_b; ++c)
    for (Index j = 0; j < ny_b; ++j) {
      if (j + 1 < ny_b) faces.emplace_back(b_id(c, j), b_id(c, j + 1));
      if (c + 1 < nx_b) faces.emplace_back(b_id(c, j), b_id(c + 1, j));
    }

  MeshInput out;
  out.centroids.resize(mesh.nc, 2);
  for (Index i = 0; i < static_cast<Index>(cells.size()); ++i) {
    const Cell& cell = cells[static_cast<std::size_t>(i)];
    const double jx = 0.12 * cell.hx * rng.uniform(-1., 1.);
    const double jy = 0.12 * hy * rng.uniform(-1., 1.);
    if (i < mesh.nc) {
      out.centroids(i, 0) = cell.x + jx;
      out.centroids(i, 1) = cell.y + jy;
    }
  }
  for (const auto& [a, b] : faces)
    if (a < mesh.nc && b < mesh.nc) out.face_pairs.emplace_back(a, b);

  SnapshotSet set;
  set.dt = rf.dt;
  set.split = Split::train;
  for (int i = 0; i < m; ++i) {
    const double t = static_cast<double>(i) * rf.dt;
    set.snapshots.push_back(sample_flow(rf, out.centroids, t));
    set.times.push_back(t);
    set.re.push_back(flow.re);
    set.u_in.push_back(rf.u_in);
  }
  validate(set);
  return {std::move(out), std::move(set)};
}

namespace {

std::vector<std::string> snapshot_header(Index features) {
  if (features == 2) return {"ux", "uy"};
  std::vector<std::string> h;
  for (Index i = 0; i < features; ++i) h.push_back("f" + std::to_string(i));
  return h;
}

}  // namespace

void write_dataset(const std::string& dir, const MeshInput& mesh, const SnapshotSet& set) {
  validate(set);
  if (set.snapshots.empty()) throw UsageError("refusing to write an empty dataset");
  if (set.nodes() != mesh.centroids.rows())
    throw UsageError("snapshot rows do not match the mesh cell count");
  fs::create_directories(dir);

  write_csv(dir + "/points.csv", {"x", "y"}, mesh.centroids);

  Mat face_mat(static_cast<Index>(mesh.face_pairs.size()), 2);
  for (Index k = 0; k < face_mat.rows(); ++k) {
    face_mat(k, 0) = static_cast<double>(mesh.face_pairs[static_cast<std::size_t>(k)].first);
    face_mat(k, 1) = static_cast<double>(mesh.face_pairs[static_cast<std::size_t>(k)].second);
  }
  write_csv(dir + "/faces.csv", {"i", "j"}, face_mat);

  const auto header = snapshot_header(set.features());
  for (std::size_t i = 0; i < set.snapshots.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "snap_%04zu.csv", i);
    write_csv(dir + "/" + name, header, set.snapshots[i]);
  }

  Mat meta(1, 3);
  meta(0, 0) = set.dt;
  meta(0, 1) = set.u_in.front();
  meta(0, 2) = set.re.front();
  write_csv(dir + "/meta.csv", {"dt", "u_in", "re"}, meta);
}

std::pair<MeshInput, SnapshotSet> load_snapshots(const std::string& dir) {
  if (!fs::is_directory(dir)) throw IngestError(dir + " is not a directory");

  MeshInput mesh;
  mesh.centroids = read_csv(dir + "/points.csv", {"x", "y"});
  if (mesh.centroids.rows() < 1) throw IngestError(dir + "/points.csv holds no points");
  const Index n = mesh.centroids.rows();

  const Mat face_mat = read_csv(dir + "/faces.csv", {"i", "j"});
  for (Index k = 0; k < face_mat.rows(); ++k) {
    for (int c = 0; c < 2; ++c) {
      const double v = face_mat(k, c);
      if (v != std::floor(v) || v < 0 || v >= static_cast<double>(n))
        throw IngestError(dir + "/faces.csv:" + std::to_string(k + 2) +
                          ": cell index out of range");
    }
    mesh.face_pairs.emplace_back(static_cast<Index>(face_mat(k, 0)),
                                 static_cast<Index>(face_mat(k, 1)));
  }

  std::vector<std::pair<long, std::string>> snaps;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("snap_", 0) != 0 || name.size() < 10 ||
        name.substr(name.size() - 4) != ".csv")
      continue;
    const std::string digits = name.substr(5, name.size() - 9);
    if (digits.empty() || digits.find_first_not_of("0123456789") != std::string::npos)
      continue;
    snaps.emplace_back(std::stol(digits), entry.path().string());
  }
  if (snaps.empty()) throw IngestError("no snapshots found in " + dir);
  std::sort(snaps.begin(), snaps.end());

  SnapshotSet set;
  double dt = 1., u_in = 0., re = 0.;
  if (fs::exists(dir + "/meta.csv")) {
    const Mat meta = read_csv(dir + "/meta.csv", {"dt", "u_in", "re"});
    if (meta.rows() != 1) throw IngestError(dir + "/meta.csv: expected a single row");
    dt = meta(0, 0);
    u_in = meta(0, 1);
    re = meta(0, 2);
    if (!(dt > 0.)) throw IngestError(dir + "/meta.csv: dt must be positive");
  }
  set.dt = dt;

  Index features = -1;
  for (std::size_t i = 0; i < snaps.size(); ++i) {
    CsvTable table = read_csv(snaps[i].second);
    if (table.values.rows() != n)
      throw IngestError(snaps[i].second + ": " + std::to_string(table.values.rows()) +
                        " rows for a mesh of " + std::to_string(n) + " cells");
    if (features < 0) features = table.values.cols();
    if (table.values.cols() != features)
      throw IngestError(snaps[i].second + ": feature count differs from earlier snapshots");
    set.snapshots.push_back(std::move(table.values));
    set.times.push_back(static_cast<double>(i) * dt);
    set.re.push_back(re);
    set.u_in.push_back(u_in);
  }
  validate(set);
  return {std::move(mesh), std::move(set)};
}

Standardizer Standardizer::fit(const SnapshotSet& train) {
  if (train.split != Split::train)
    throw UsageError("standardizer statistics must come from the training split");
  if (train.snapshots.empty()) throw UsageError("cannot fit a standardizer on an empty set");
  validate(train);

  const Index f = train.features();
  Standardizer s;
  s.mean = Mat::Zero(1, f);
  s.std = Mat::Zero(1, f);
  double count = 0.;
  for (const Mat& x : train.snapshots) {
    s.mean += x.colwise().sum();
    count += static_cast<double>(x.rows());
  }
  s.mean /= count;
  for (const Mat& x : train.snapshots)
    s.std += (x.rowwise() - s.mean.row(0)).array().square().colwise().sum().matrix();
  s.std = (s.std / count).array().sqrt().max(1e-12).matrix();
  s.u_in = std::accumulate(train.u_in.begin(), train.u_in.end(), 0.) /
           static_cast<double>(train.u_in.size());
  return s;
}

Mat Standardizer::apply_rows(const Mat& x) const {
  if (x.cols() != mean.cols())
    throw DimensionError("standardizer fitted for " + std::to_string(mean.cols()) +
                         " features, got " + std::to_string(x.cols()));
  return ((x.rowwise() - mean.row(0)).array().rowwise() / std.row(0).array()).matrix();
}

Mat Standardizer::invert_rows(const Mat& x) const {
  if (x.cols() != mean.cols())
    throw DimensionError("standardizer fitted for " + std::to_string(mean.cols()) +
                         " features, got " + std::to_string(x.cols()));
  return ((x.array().rowwise() * std.row(0).array()).rowwise() + mean.row(0).array()).matrix();
}

SnapshotSet Standardizer::apply(const SnapshotSet& set) const {
  SnapshotSet out = set;
  for (Mat& x : out.snapshots) x = apply_rows(x);
  return out;
}

SnapshotSet Standardizer::invert(const SnapshotSet& set) const {
  SnapshotSet out = set;
  for (Mat& x : out.snapshots) x = invert_rows(x);
  return out;
}

void Standardizer::save(const std::string& path) const {
  const Index f = mean.cols();
  std::vector<std::string> header;
  Mat row(1, 2 * f + 1);
  for (Index i = 0; i < f; ++i) {
    header.push_back("mean_" + std::to_string(i));
    row(0, i) = mean(0, i);
  }
  for (Index i = 0; i < f; ++i) {
    header.push_back("std_" + std::to_string(i));
    row(0, f + i) = std(0, i);
  }
  header.emplace_back("u_in");
  row(0, 2 * f) = u_in;
  write_csv(path, header, row);
}

Standardizer Standardizer::load(const std::string& path) {
  CsvTable table = read_csv(path);
  if (table.values.rows() != 1 || table.header.size() < 3 || table.header.size() % 2 == 0)
    throw IngestError(path + ": malformed standardizer file");
  const Index f = static_cast<Index>(table.header.size()) / 2;
  if (table.header.back() != "u_in") throw IngestError(path + ": missing u_in column");
  Standardizer s;
  s.mean = table.values.block(0, 0, 1, f);
  s.std = table.values.block(0, f, 1, f);
  s.u_in = table.values(0, 2 * f);
  for (Index i = 0; i < f; ++i)
    if (!(s.std(0, i) > 0.)) throw IngestError(path + ": non-positive std");
  return s;
}

std::pair<SnapshotSet, Standardizer> standardize(const SnapshotSet& set,
                                                 const std::optional<Standardizer>& stats) {
  Standardizer s = stats ? *stats : Standardizer::fit(set);
  return {s.apply(set), s};
}

std::pair<SnapshotSet, SnapshotSet> split_train_val(const SnapshotSet& set, double val_fraction,
                                                    std::uint64_t seed) {
  if (!(val_fraction > 0.) || !(val_fraction < 1.))
    throw ConfigError("validation fraction must be in (0, 1)");
  validate(set);
  const std::size_t m = set.size();
  std::vector<std::size_t> ids(m);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(ids);

  const std::size_t n_val = static_cast<std::size_t>(val_fraction * static_cast<double>(m));
  std::vector<std::size_t> val_ids(ids.begin(), ids.begin() + static_cast<long>(n_val));
  std::vector<std::size_t> train_ids(ids.begin() + static_cast<long>(n_val), ids.end());
  std::sort(val_ids.begin(), val_ids.end());
  std::sort(train_ids.begin(), train_ids.end());

  auto subset = [&](const std::vector<std::size_t>& pick, Split label) {
    SnapshotSet out;
    out.dt = set.dt;
    out.split = label;
    for (std::size_t i : pick) {
      out.snapshots.push_back(set.snapshots[i]);
      out.times.push_back(set.times[i]);
      out.re.push_back(set.re[i]);
      out.u_in.push_back(set.u_in[i]);
    }
    return out;
  };
  return {subset(train_ids, Split::train), subset(val_ids, Split::val)};
}

}  // namespace gae

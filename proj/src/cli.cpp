#include "gae/cli.hpp"

#include "gae/csv.hpp"
#include "gae/data.hpp"
#include "gae/error.hpp"
#include "gae/run_config.hpp"
#include "gae/train.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

namespace gae {

namespace {

std::vector<std::string> split_dirs(const std::string& arg) {
  std::vector<std::string> dirs;
  std::string::size_type start = 0;
  while (true) {
    const auto comma = arg.find(',', start);
    const std::string d = arg.substr(start, comma - start);
    if (!d.empty()) dirs.push_back(d);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (dirs.empty()) throw ConfigError("--data needs at least one directory");
  return dirs;
}

struct LoadedData {
  MeshInput mesh;
  std::vector<SnapshotSet> trajectories;  // one per directory
  SnapshotSet all;
};

/// Load one trajectory directory per --data entry; all must share the mesh.
LoadedData load_data(const std::string& data_arg) {
  LoadedData data;
  for (const std::string& dir : split_dirs(data_arg)) {
    auto [mesh, set] = load_snapshots(dir);
    if (data.trajectories.empty()) {
      data.mesh = std::move(mesh);
    } else if (mesh.centroids.rows() != data.mesh.centroids.rows() ||
               !(mesh.centroids.array() == data.mesh.centroids.array()).all() ||
               mesh.face_pairs != data.mesh.face_pairs) {
      throw InputError("data directories do not share a mesh: " + dir);
    }
    data.trajectories.push_back(std::move(set));
  }
  data.all = data.trajectories.size() == 1 ? data.trajectories.front()
                                           : concat_sets(data.trajectories);
  return data;
}

struct GenArgs {
  std::string out;
  Index nc = 2000;
  int snapshots = 16;
  double re = 1000.;
  std::uint64_t seed = 0;
};

int cmd_gen(const GenArgs& a) {
  MeshParams mesh_params;
  mesh_params.nc = a.nc;
  FlowParams flow;
  flow.re = a.re;
  auto [mesh, set] = generate_synthetic(mesh_params, flow, a.snapshots, a.seed);
  write_dataset(a.out, mesh, set);
  std::printf("wrote %d cells, %d snapshots to %s\n", static_cast<int>(a.nc), a.snapshots,
              a.out.c_str());
  return 0;
}

struct TrainArgs {
  std::string config, data, run_dir, preset;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  bool seed_given = false;
  bool deterministic = false;
};

int cmd_train(const TrainArgs& a) {
  RunConfig cfg = load_run_config(a.config, a.overrides);
  if (!a.preset.empty()) cfg.preset = a.preset;
  if (a.seed_given) cfg.train.seed = a.seed;
  if (a.deterministic) cfg.train.deterministic = true;
  apply_preset(cfg);

  std::filesystem::create_directories(a.run_dir);
  cfg.train.out_dir = a.run_dir;
  write_config_lock(a.run_dir + "/config.lock", cfg);

  LoadedData data = load_data(a.data);
  Graph g0 = build_input_graph(data.mesh, make_graph_options(cfg));

  SnapshotSet train_set = data.all, val_set;
  if (cfg.val_fraction > 0.)
    std::tie(train_set, val_set) = split_train_val(data.all, cfg.val_fraction, cfg.train.seed);
  if (val_set.snapshots.empty()) {
    val_set = train_set;
    val_set.split = Split::val;
  }

  Standardizer stdzr = Standardizer::fit(train_set);
  stdzr.save(a.run_dir + "/stats.csv");

  GaeModel model(make_model_config(cfg, train_set.features(), g0.E.cols()), cfg.train.seed);
  cfg.train.verbose = true;
  FitResult result =
      fit(model, g0, stdzr.apply(train_set), stdzr.apply(val_set), cfg.train);
  std::printf("best val mse %.17g at epoch %d (%zu params)\n", result.best_val,
              result.best_epoch, model.params().total_values());
  return 0;
}

struct EvalArgs {
  std::string run_dir, data, out;
};

int cmd_eval(const EvalArgs& a) {
  RunConfig cfg = load_run_config(a.run_dir + "/config.lock", {});
  apply_preset(cfg);
  LoadedData data = load_data(a.data);
  Graph g0 = build_input_graph(data.mesh, make_graph_options(cfg));
  Standardizer stdzr = Standardizer::load(a.run_dir + "/stats.csv");
  GaeModel model(make_model_config(cfg, data.all.features(), g0.E.cols()), cfg.train.seed);
  model.load(a.run_dir + "/best.ckpt");

  const Index features = data.all.features();
  Mat rows(static_cast<Index>(data.trajectories.size()) * features, 3);
  Index r = 0;
  for (const SnapshotSet& traj : data.trajectories) {
    SnapshotSet scaled = stdzr.apply(traj);
    scaled.split = Split::test;
    const std::vector<double> rmse = evaluate_rmse(model, g0, scaled, stdzr);
    for (Index f = 0; f < features; ++f, ++r) {
      rows(r, 0) = traj.re.front();
      rows(r, 1) = static_cast<double>(f);
      rows(r, 2) = rmse[static_cast<std::size_t>(f)];
    }
  }
  write_csv(a.out, {"re", "feature", "rmse"}, rows);
  std::printf("wrote %s\n", a.out.c_str());
  return 0;
}

struct ReconstructArgs {
  std::string run_dir, data, out;
  long long snapshot = 0;
};

int cmd_reconstruct(const ReconstructArgs& a) {
  RunConfig cfg = load_run_config(a.run_dir + "/config.lock", {});
  apply_preset(cfg);
  LoadedData data = load_data(a.data);
  if (a.snapshot < 0 || a.snapshot >= static_cast<long long>(data.all.size()))
    throw InputError("snapshot index " + std::to_string(a.snapshot) + " out of range (dataset has " +
                     std::to_string(data.all.size()) + " snapshots)");
  Graph g0 = build_input_graph(data.mesh, make_graph_options(cfg));
  Standardizer stdzr = Standardizer::load(a.run_dir + "/stats.csv");
  GaeModel model(make_model_config(cfg, data.all.features(), g0.E.cols()), cfg.train.seed);
  model.load(a.run_dir + "/best.ckpt");

  const Mat snap = stdzr.apply_rows(data.all.snapshots[static_cast<std::size_t>(a.snapshot)]);
  AutoencodeResult result = model.autoencode(bind_snapshot(g0, snap));

  std::filesystem::create_directories(a.out);
  const Index n = g0.num_nodes();
  const Mat recon = stdzr.invert_rows(result.recon.value());

  Mat recon_rows(n, 2 + recon.cols());
  recon_rows.leftCols(2) = data.mesh.centroids;
  recon_rows.rightCols(recon.cols()) = recon;
  std::vector<std::string> header = {"x", "y"};
  for (Index f = 0; f < recon.cols(); ++f) header.push_back("f" + std::to_string(f));
  const std::string tag = std::to_string(a.snapshot);
  write_csv(a.out + "/recon_" + tag + ".csv", header, recon_rows);

  Mat mask_rows(n, 3);
  mask_rows.leftCols(2) = data.mesh.centroids;
  for (Index i = 0; i < n; ++i)
    mask_rows(i, 2) = static_cast<double>(result.masked[static_cast<std::size_t>(i)]);
  write_csv(a.out + "/mask_" + tag + ".csv", {"x", "y", "level"}, mask_rows);
  std::printf("wrote recon_%s.csv and mask_%s.csv to %s\n", tag.c_str(), tag.c_str(),
              a.out.c_str());
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"graph autoencoder for fields on unstructured meshes"};
  app.require_subcommand(1);

  GenArgs gen_args;
  CLI::App* gen = app.add_subcommand("gen", "generate a synthetic dataset directory");
  gen->add_option("--out", gen_args.out, "output directory")->required();
  gen->add_option("--nc", gen_args.nc, "exact cell count");
  gen->add_option("--snapshots", gen_args.snapshots, "number of snapshots");
  gen->add_option("--re", gen_args.re, "Reynolds number");
  gen->add_option("--seed", gen_args.seed, "rng seed");

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand("train", "train an autoencoder");
  train->add_option("--config", train_args.config, "key = value config file");
  train->add_option("--data", train_args.data, "dataset directories, comma separated")->required();
  train->add_option("--run-dir", train_args.run_dir, "output run directory")->required();
  train->add_option("--preset", train_args.preset, "ablation preset")
      ->check(CLI::IsMember({"model1", "model2", "model3"}));
  train->add_option("--set", train_args.overrides, "config override key=value");
  train->add_option("--seed", train_args.seed, "rng seed override")
      ->each([&](const std::string&) { train_args.seed_given = true; });
  train->add_flag("--deterministic", train_args.deterministic,
                  "single-threaded run with zeroed wall times");

  EvalArgs eval_args;
  CLI::App* eval = app.add_subcommand("eval", "per-trajectory reconstruction RMSE");
  eval->add_option("--run-dir", eval_args.run_dir, "trained run directory")->required();
  eval->add_option("--data", eval_args.data, "dataset directories, comma separated")->required();
  eval->add_option("--out", eval_args.out, "output rmse.csv path")->required();

  ReconstructArgs rec_args;
  CLI::App* rec = app.add_subcommand("reconstruct", "export reconstruction and masked field");
  rec->add_option("--run-dir", rec_args.run_dir, "trained run directory")->required();
  rec->add_option("--data", rec_args.data, "dataset directories, comma separated")->required();
  rec->add_option("--snapshot", rec_args.snapshot, "snapshot index")->required();
  rec->add_option("--out", rec_args.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_gen(gen_args);
    if (train->parsed()) return cmd_train(train_args);
    if (eval->parsed()) return cmd_eval(eval_args);
    return cmd_reconstruct(rec_args);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace gae

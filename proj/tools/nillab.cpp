#include <CLI11.hpp>

#include <cstdio>

#include "nillab/io.hpp"

using namespace nillab;

namespace {

// 0 success, 2 validation failure, 3 numerical failure, 4 construction failure
int guarded(int (*body)(void*), void* ctx) {
  try {
    return body(ctx);
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "validation error: %s\n", e.what());
    return 2;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return 3;
  } catch (const ConstructionError& e) {
    std::fprintf(stderr, "construction error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}

struct Args {
  std::string path;
  ManifestOverrides ov;
};

int do_check(void* ctx) {
  const Args& a = *static_cast<Args*>(ctx);
  const AlgebraCheck r = check_algebra_spec(a.path);
  std::fputs(r.report.c_str(), stdout);
  return 0;
}

int do_tower(void* ctx) {
  const Args& a = *static_cast<Args*>(ctx);
  const RunOutputs r = tower_build_file(a.path, a.ov);
  for (const auto& f : r.files) std::printf("wrote %s\n", f.c_str());
  return 0;
}

int do_run(void* ctx) {
  const Args& a = *static_cast<Args*>(ctx);
  const RunOutputs r = run_manifest_file(a.path, a.ov);
  for (const auto& f : r.files) std::printf("wrote %s\n", f.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"numerical laboratory for nilflows and their smooth time-changes"};
  app.require_subcommand(1);

  Args check_args, tower_args, run_args;

  auto* algebra = app.add_subcommand("algebra", "algebra spec utilities");
  algebra->require_subcommand(1);
  auto* check = algebra->add_subcommand("check", "validate an algebra spec file");
  check->add_option("spec", check_args.path, "algebra spec path")->required();

  auto* tower = app.add_subcommand("tower", "tower construction");
  tower->require_subcommand(1);
  auto* build = tower->add_subcommand("build", "build the maximal tower of a manifest");
  build->add_option("manifest", tower_args.path, "tower manifest path")->required();

  auto* run = app.add_subcommand("run", "execute every job of a run manifest");
  run->add_option("manifest", run_args.path, "run manifest path")->required();
  std::uint64_t seed = 0;
  int samples = 0;
  std::string out_dir;
  auto* seed_opt = run->add_option("--seed", seed, "override the manifest seed");
  auto* samples_opt = run->add_option("--samples", samples, "override the sample count");
  auto* out_opt = run->add_option("--out", out_dir, "override the output directory");

  CLI11_PARSE(app, argc, argv);

  if (check->parsed()) return guarded(do_check, &check_args);
  if (build->parsed()) return guarded(do_tower, &tower_args);
  if (run->parsed()) {
    if (*seed_opt) run_args.ov.seed = seed;
    if (*samples_opt) run_args.ov.samples = samples;
    if (*out_opt) run_args.ov.out_dir = out_dir;
    return guarded(do_run, &run_args);
  }
  return 2;
}

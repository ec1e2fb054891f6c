// Pipeline driver: generate a synthetic world, train the discriminator,
// mine triplets, train the background encoder, build the retrieval index,
// and evaluate ranked retrieval against the world's oracle.

#include <functional>
#include <iostream>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "ufo/io.hpp"
#include "ufo/pipeline.hpp"

namespace {

// 0 success, 2 validation, 3 missing/stale artifact, 4 numeric failure.
int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ufo::MissingArtifactError*>(&e) ||
      dynamic_cast<const ufo::StaleArtifactError*>(&e)) {
    return 3;
  }
  if (dynamic_cast<const ufo::NonFiniteLossError*>(&e) ||
      dynamic_cast<const ufo::ZeroVectorError*>(&e)) {
    return 4;
  }
  if (dynamic_cast<const ufo::Error*>(&e)) return 2;
  return 1;
}

std::vector<ufo::EvalMode> parse_modes(const std::vector<std::string>& names) {
  std::vector<ufo::EvalMode> modes;
  for (const auto& name : names) modes.push_back(ufo::eval_mode_from_string(name));
  return modes;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ufo: unconstrained foreground object search pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  std::uint64_t seed = 1;
  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--out-dir", out_dir, "artifact directory");
  auto* seed_opt = app.add_option("--seed", seed, "root seed (fans out per stage)");

  // Config knobs; a flag wins over the config file, which wins over defaults.
  using Apply = std::function<void(ufo::PipelineConfig&)>;
  std::vector<std::pair<CLI::Option*, Apply>> overrides;
  auto bind_d = [&](const char* name, const char* desc, auto setter) {
    auto storage = std::make_shared<double>();
    CLI::Option* opt = app.add_option(name, *storage, desc);
    overrides.emplace_back(opt, [storage, setter](ufo::PipelineConfig& c) { setter(c, *storage); });
  };
  auto bind_i = [&](const char* name, const char* desc, auto setter) {
    auto storage = std::make_shared<int>();
    CLI::Option* opt = app.add_option(name, *storage, desc);
    overrides.emplace_back(opt, [storage, setter](ufo::PipelineConfig& c) { setter(c, *storage); });
  };
  auto bind_s = [&](const char* name, const char* desc, auto setter) {
    auto storage = std::make_shared<std::string>();
    CLI::Option* opt = app.add_option(name, *storage, desc);
    overrides.emplace_back(opt, [storage, setter](ufo::PipelineConfig& c) { setter(c, *storage); });
  };

  bind_d("--margin", "triplet loss margin M",
         [](ufo::PipelineConfig& c, double v) { c.train.margin = v; });
  bind_d("--lr", "encoder learning rate",
         [](ufo::PipelineConfig& c, double v) { c.train.lr = v; });
  bind_i("--iterations", "encoder training iterations",
         [](ufo::PipelineConfig& c, int v) { c.train.iterations = v; });
  bind_i("--batch-size", "encoder batch size",
         [](ufo::PipelineConfig& c, int v) { c.train.batch_size = v; });
  bind_d("--disc-lr", "discriminator learning rate",
         [](ufo::PipelineConfig& c, double v) { c.disc.lr = v; });
  bind_i("--disc-epochs", "discriminator epochs",
         [](ufo::PipelineConfig& c, int v) { c.disc.epochs = v; });
  bind_d("--t-high", "mined-positive threshold",
         [](ufo::PipelineConfig& c, double v) { c.sampling.t_high = v; });
  bind_d("--t-low", "mined-negative threshold",
         [](ufo::PipelineConfig& c, double v) { c.sampling.t_low = v; });
  bind_i("--k-c", "similar backgrounds in the candidate pool",
         [](ufo::PipelineConfig& c, int v) { c.sampling.k_c = v; });
  bind_i("--k-g", "similar foregrounds in the candidate pool",
         [](ufo::PipelineConfig& c, int v) { c.sampling.k_g = v; });
  bind_i("--n-random", "random picks in the candidate pool",
         [](ufo::PipelineConfig& c, int v) { c.sampling.n_random = v; });
  bind_i("--max-triplets-per-bg", "triplet cap per background",
         [](ufo::PipelineConfig& c, int v) { c.sampling.max_triplets_per_bg = v; });
  bind_i("--n-backgrounds", "world size: backgrounds",
         [](ufo::PipelineConfig& c, int v) { c.world.n_backgrounds = v; });
  bind_i("--n-foregrounds", "world size: foregrounds",
         [](ufo::PipelineConfig& c, int v) { c.world.n_foregrounds = v; });
  bind_i("--n-categories", "world size: categories",
         [](ufo::PipelineConfig& c, int v) { c.world.n_categories = v; });
  bind_i("--feature-dim", "foreground feature dim",
         [](ufo::PipelineConfig& c, int v) { c.world.feature_dim = v; });
  bind_i("--context-dim", "background feature dim",
         [](ufo::PipelineConfig& c, int v) { c.world.context_dim = v; });
  bind_d("--noise-sigma", "world feature noise",
         [](ufo::PipelineConfig& c, double v) { c.world.noise_sigma = v; });
  bind_d("--aspect-jitter", "oracle aspect tolerance",
         [](ufo::PipelineConfig& c, double v) { c.world.aspect_jitter = v; });
  bind_s("--index-kind", "retrieval index kind (exact|clustered)",
         [](ufo::PipelineConfig& c, const std::string& v) { c.index.kind = v; });
  bind_i("--n-probe", "clustered index probes",
         [](ufo::PipelineConfig& c, int v) { c.index.n_probe = v; });
  bind_i("--n-list", "clustered index cells (0 = sqrt(N))",
         [](ufo::PipelineConfig& c, int v) { c.index.n_list = v; });
  bind_i("--map-cutoff", "mAP cutoff",
         [](ufo::PipelineConfig& c, int v) { c.eval.map_cutoff = v; });

  auto* gen_data = app.add_subcommand("gen-data", "generate the synthetic world");
  auto* train_disc = app.add_subcommand("train-disc", "train the pair discriminator");
  auto* gen_triplets =
      app.add_subcommand("gen-triplets", "mine filtered training triplets");

  auto* train_encoder =
      app.add_subcommand("train-encoder", "train the background encoder");
  std::string encoder_mode = "ufo";
  train_encoder->add_option("--mode", encoder_mode,
                            "ufo|no_discriminator|regression|no_bg_training");

  auto* build_index = app.add_subcommand("build-index", "index foreground embeddings");

  auto* query = app.add_subcommand("query", "retrieve top-k for one background");
  std::uint64_t query_bg = 0;
  int query_k = 25;
  std::string query_mode = "ufo";
  query->add_option("--bg-id", query_bg, "background id")->required();
  query->add_option("--k", query_k, "retrievals");
  query->add_option("--mode", query_mode, "encoder checkpoint to use");

  auto* eval = app.add_subcommand("eval", "evaluate modes on the eval split");
  std::vector<std::string> eval_modes = {"ufo"};
  eval->add_option("--modes", eval_modes, "modes to evaluate")->delimiter(',');

  auto* bench = app.add_subcommand("bench", "index + coupled-cost benchmarks");
  ufo::BenchRandomArgs bench_args;
  bool bench_random = false, bench_world = false;
  int bench_queries = 20;
  bench->add_flag("--random", bench_random, "bench exact vs clustered on random vectors");
  bench->add_option("--random-n", bench_args.n, "random vector count");
  bench->add_option("--random-dim", bench_args.dim, "random vector dim");
  bench->add_option("--n-queries", bench_args.n_queries, "random bench queries");
  bench->add_option("--k", bench_args.k, "top-k");
  bench->add_option("--centers", bench_args.n_centers,
                    "mixture centers for random vectors (0 = uniform sphere)");
  bench->add_option("--cluster-sigma", bench_args.cluster_sigma, "mixture dispersion");
  bench->add_flag("--world", bench_world, "bench discriminator-only vs embed+query");
  bench->add_option("--world-queries", bench_queries, "world bench queries");

  auto* ablate = app.add_subcommand("ablate", "run the full ablation matrix");
  std::vector<std::string> ablate_modes = {"ufo", "no_discriminator", "regression",
                                           "no_bg_training", "discriminator_only", "shape"};
  ablate->add_option("--modes", ablate_modes, "modes to run")->delimiter(',');

  // Global flags may appear after the subcommand name.
  for (CLI::App* sub : app.get_subcommands({})) sub->fallthrough();

  CLI11_PARSE(app, argc, argv);

  try {
    ufo::PipelineConfig cfg = config_path.empty()
                                  ? ufo::PipelineConfig::defaults(seed)
                                  : ufo::PipelineConfig::from_json_string(
                                        ufo::read_text_file(config_path));
    if (seed_opt->count() > 0) cfg.seed = seed;
    for (const auto& [opt, apply] : overrides) {
      if (opt->count() > 0) apply(cfg);
    }
    cfg.resolve();

    if (gen_data->parsed()) {
      ufo::stage_gen_data(cfg, out_dir, std::cout);
    } else if (train_disc->parsed()) {
      ufo::stage_train_disc(cfg, out_dir, std::cout);
    } else if (gen_triplets->parsed()) {
      ufo::stage_gen_triplets(cfg, out_dir, std::cout);
    } else if (train_encoder->parsed()) {
      ufo::stage_train_encoder(cfg, out_dir, ufo::train_mode_from_string(encoder_mode),
                               std::cout);
    } else if (build_index->parsed()) {
      ufo::stage_build_index(cfg, out_dir, std::cout);
    } else if (query->parsed()) {
      ufo::stage_query(cfg, out_dir, query_bg, query_k,
                       ufo::train_mode_from_string(query_mode), std::cout);
    } else if (eval->parsed()) {
      ufo::stage_eval(cfg, out_dir, parse_modes(eval_modes), std::cout);
    } else if (bench->parsed()) {
      if (!bench_random && !bench_world) bench_random = true;
      if (bench_random) ufo::stage_bench_random(cfg, out_dir, bench_args, std::cout);
      if (bench_world) ufo::stage_bench_world(cfg, out_dir, bench_queries, std::cout);
    } else if (ablate->parsed()) {
      ufo::stage_ablate(cfg, out_dir, parse_modes(ablate_modes), std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return 0;
}

#include "ufo/pipeline.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "ufo/io.hpp"

namespace ufo {

using nlohmann::json;

namespace {

json world_to_json(const WorldConfig& w) {
  return json{{"n_categories", w.n_categories},
              {"n_backgrounds", w.n_backgrounds},
              {"n_foregrounds", w.n_foregrounds},
              {"feature_dim", w.feature_dim},
              {"context_dim", w.context_dim},
              {"noise_sigma", w.noise_sigma},
              {"compat_table", w.compat_table},
              {"aspect_jitter", w.aspect_jitter},
              {"train_fraction", w.train_fraction},
              {"seed", w.seed}};
}

void world_from_json(const json& j, WorldConfig& w) {
  w.n_categories = j.value("n_categories", w.n_categories);
  w.n_backgrounds = j.value("n_backgrounds", w.n_backgrounds);
  w.n_foregrounds = j.value("n_foregrounds", w.n_foregrounds);
  w.feature_dim = j.value("feature_dim", w.feature_dim);
  w.context_dim = j.value("context_dim", w.context_dim);
  w.noise_sigma = j.value("noise_sigma", w.noise_sigma);
  if (j.contains("compat_table")) {
    w.compat_table = j.at("compat_table").get<std::vector<std::vector<int>>>();
  }
  w.aspect_jitter = j.value("aspect_jitter", w.aspect_jitter);
  w.train_fraction = j.value("train_fraction", w.train_fraction);
  w.seed = j.value("seed", w.seed);
}

}  // namespace

namespace artifacts {
std::string encoder_ckpt(TrainMode mode) { return "encoder_" + to_string(mode) + ".ckpt"; }
}  // namespace artifacts

PipelineConfig PipelineConfig::defaults(std::uint64_t seed) {
  PipelineConfig cfg;
  cfg.seed = seed;
  return cfg;
}

void PipelineConfig::resolve() {
  if (world.seed == 0) world.seed = seed_fold(seed, "world");
  if (world.compat_table.empty()) {
    world.compat_table =
        WorldConfig::default_compat_table(4 * world.n_categories, world.n_categories,
                                          world.seed);
  }
  if (train.seed == 0) train.seed = seed_fold(seed, "train-encoder");
  if (disc.seed == 0) disc.seed = seed_fold(seed, "disc-train");
  if (sampling.seed == 0) sampling.seed = seed_fold(seed, "triplets");
  if (index.seed == 0) index.seed = seed_fold(seed, "index");
}

std::string PipelineConfig::to_json_string() const {
  json j;
  j["seed"] = seed;
  j["world"] = world_to_json(world);
  j["dims"] = json{{"enc_hidden", dims.enc_hidden},
                   {"embed_dim", dims.embed_dim},
                   {"disc_h1", dims.disc_h1},
                   {"disc_h2", dims.disc_h2}};
  j["train"] = json{{"margin", train.margin},
                    {"lr", train.lr},
                    {"beta1", train.beta1},
                    {"beta2", train.beta2},
                    {"epsilon", train.epsilon},
                    {"iterations", train.iterations},
                    {"batch_size", train.batch_size},
                    {"mode", to_string(train.mode)},
                    {"seed", train.seed},
                    {"log_every", train.log_every},
                    {"remine_every", train.remine_every}};
  j["disc"] = json{{"lr", disc.lr},
                   {"beta1", disc.beta1},
                   {"beta2", disc.beta2},
                   {"epsilon", disc.epsilon},
                   {"epochs", disc.epochs},
                   {"batch_size", disc.batch_size},
                   {"patience", disc.patience},
                   {"val_fraction", disc.val_fraction},
                   {"seed", disc.seed}};
  j["sampling"] = json{{"k_c", sampling.k_c},
                       {"k_g", sampling.k_g},
                       {"n_random", sampling.n_random},
                       {"t_high", sampling.t_high},
                       {"t_low", sampling.t_low},
                       {"max_probe", sampling.max_probe},
                       {"max_triplets_per_bg", sampling.max_triplets_per_bg},
                       {"seed", sampling.seed}};
  j["index"] = json{{"kind", index.kind},
                    {"n_list", index.n_list},
                    {"n_probe", index.n_probe},
                    {"kmeans_iters", index.kmeans_iters},
                    {"seed", index.seed}};
  j["eval"] = json{{"map_cutoff", eval.map_cutoff}, {"map_all", eval.map_all}, {"ks", eval.ks}};
  return j.dump();
}

PipelineConfig PipelineConfig::from_json_string(const std::string& s) {
  json j;
  try {
    j = json::parse(s);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("config parse error: ") + e.what());
  }
  PipelineConfig cfg;
  cfg.seed = j.value("seed", cfg.seed);
  if (j.contains("world")) world_from_json(j.at("world"), cfg.world);
  if (j.contains("dims")) {
    const auto& d = j.at("dims");
    cfg.dims.enc_hidden = d.value("enc_hidden", cfg.dims.enc_hidden);
    cfg.dims.embed_dim = d.value("embed_dim", cfg.dims.embed_dim);
    cfg.dims.disc_h1 = d.value("disc_h1", cfg.dims.disc_h1);
    cfg.dims.disc_h2 = d.value("disc_h2", cfg.dims.disc_h2);
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    cfg.train.margin = t.value("margin", cfg.train.margin);
    cfg.train.lr = t.value("lr", cfg.train.lr);
    cfg.train.beta1 = t.value("beta1", cfg.train.beta1);
    cfg.train.beta2 = t.value("beta2", cfg.train.beta2);
    cfg.train.epsilon = t.value("epsilon", cfg.train.epsilon);
    cfg.train.iterations = t.value("iterations", cfg.train.iterations);
    cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
    if (t.contains("mode")) cfg.train.mode = train_mode_from_string(t.at("mode"));
    cfg.train.seed = t.value("seed", cfg.train.seed);
    cfg.train.log_every = t.value("log_every", cfg.train.log_every);
    cfg.train.remine_every = t.value("remine_every", cfg.train.remine_every);
  }
  if (j.contains("disc")) {
    const auto& d = j.at("disc");
    cfg.disc.lr = d.value("lr", cfg.disc.lr);
    cfg.disc.beta1 = d.value("beta1", cfg.disc.beta1);
    cfg.disc.beta2 = d.value("beta2", cfg.disc.beta2);
    cfg.disc.epsilon = d.value("epsilon", cfg.disc.epsilon);
    cfg.disc.epochs = d.value("epochs", cfg.disc.epochs);
    cfg.disc.batch_size = d.value("batch_size", cfg.disc.batch_size);
    cfg.disc.patience = d.value("patience", cfg.disc.patience);
    cfg.disc.val_fraction = d.value("val_fraction", cfg.disc.val_fraction);
    cfg.disc.seed = d.value("seed", cfg.disc.seed);
  }
  if (j.contains("sampling")) {
    const auto& s2 = j.at("sampling");
    cfg.sampling.k_c = s2.value("k_c", cfg.sampling.k_c);
    cfg.sampling.k_g = s2.value("k_g", cfg.sampling.k_g);
    cfg.sampling.n_random = s2.value("n_random", cfg.sampling.n_random);
    cfg.sampling.t_high = s2.value("t_high", cfg.sampling.t_high);
    cfg.sampling.t_low = s2.value("t_low", cfg.sampling.t_low);
    cfg.sampling.max_probe = s2.value("max_probe", cfg.sampling.max_probe);
    cfg.sampling.max_triplets_per_bg =
        s2.value("max_triplets_per_bg", cfg.sampling.max_triplets_per_bg);
    cfg.sampling.seed = s2.value("seed", cfg.sampling.seed);
  }
  if (j.contains("index")) {
    const auto& i = j.at("index");
    cfg.index.kind = i.value("kind", cfg.index.kind);
    cfg.index.n_list = i.value("n_list", cfg.index.n_list);
    cfg.index.n_probe = i.value("n_probe", cfg.index.n_probe);
    cfg.index.kmeans_iters = i.value("kmeans_iters", cfg.index.kmeans_iters);
    cfg.index.seed = i.value("seed", cfg.index.seed);
  }
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    cfg.eval.map_cutoff = e.value("map_cutoff", cfg.eval.map_cutoff);
    cfg.eval.map_all = e.value("map_all", cfg.eval.map_all);
    if (e.contains("ks")) cfg.eval.ks = e.at("ks").get<std::vector<int>>();
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

void manifest_append(const std::string& dir, const std::string& stage,
                     const PipelineConfig& cfg, const std::vector<std::string>& inputs,
                     const std::vector<std::string>& outputs,
                     const std::vector<std::string>& volatile_outputs) {
  json rec;
  rec["stage"] = stage;
  rec["config"] = json::parse(cfg.to_json_string());
  rec["config_hash"] = cfg.config_hash();
  json in = json::object();
  for (const auto& f : inputs) in[f] = hash_hex(hash_file(dir + "/" + f));
  rec["inputs"] = in;
  json out = json::object();
  for (const auto& f : outputs) out[f] = hash_hex(hash_file(dir + "/" + f));
  rec["outputs"] = out;
  rec["volatile"] = volatile_outputs;
  std::ofstream file(dir + "/" + artifacts::kManifest, std::ios::app);
  if (!file) throw IoError("cannot append manifest in " + dir);
  file << rec.dump() << "\n";
}

namespace {

// Latest manifest record producing `file`, if any.
std::optional<json> manifest_find(const std::string& dir, const std::string& file) {
  const std::string path = dir + "/" + artifacts::kManifest;
  if (!file_exists(path)) return std::nullopt;
  std::ifstream in(path);
  std::string line;
  std::optional<json> found;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json rec = json::parse(line);
    if (rec.contains("outputs") && rec.at("outputs").contains(file)) found = rec;
  }
  return found;
}

}  // namespace

void require_artifact(const std::string& dir, const std::string& file,
                      const std::string& producer_stage) {
  const auto rec = manifest_find(dir, file);
  if (!rec || !file_exists(dir + "/" + file)) {
    throw MissingArtifactError(producer_stage + " (missing artifact " + file +
                               "; run stage '" + producer_stage + "' first)");
  }
  const std::string recorded = rec->at("outputs").at(file).get<std::string>();
  const std::string actual = hash_hex(hash_file(dir + "/" + file));
  if (recorded != actual) {
    throw StaleArtifactError(file + " does not match the hash recorded by stage '" +
                             producer_stage + "' (" + recorded + " vs " + actual + ")");
  }
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

namespace {

const std::vector<std::string> kWorldFiles = {
    artifacts::kForegrounds, artifacts::kBackgrounds, artifacts::kOracleEval,
    artifacts::kFgFeatures, artifacts::kBgFeatures};

void require_world(const std::string& dir) {
  for (const auto& f : kWorldFiles) require_artifact(dir, f, "gen-data");
}

ForegroundEncoder make_fg_encoder(const PipelineConfig& cfg) {
  return ForegroundEncoder::make(cfg.world.feature_dim, cfg.dims.enc_hidden,
                                 cfg.dims.embed_dim, seed_fold(cfg.seed, "fg-encoder"));
}

BackgroundEncoder make_bg_encoder(const PipelineConfig& cfg) {
  return BackgroundEncoder::make(cfg.world.context_dim, cfg.dims.enc_hidden,
                                 cfg.dims.embed_dim, seed_fold(cfg.seed, "bg-encoder"));
}

Discriminator load_disc(const PipelineConfig& cfg, const std::string& dir) {
  auto mlps = read_checkpoint(dir + "/" + artifacts::kDiscCkpt, "UFOD");
  if (mlps.size() != 2) throw IoError("discriminator checkpoint must hold 2 MLPs");
  Discriminator d = Discriminator::make(cfg.world.context_dim, cfg.world.feature_dim,
                                        cfg.dims.disc_h1, cfg.dims.disc_h2,
                                        seed_fold(cfg.seed, "disc"));
  d.frozen_featurizer = std::move(mlps[0]);
  d.trainable_head = std::move(mlps[1]);
  return d;
}

BackgroundEncoder load_encoder(const PipelineConfig& cfg, const std::string& dir,
                               TrainMode mode) {
  auto mlps = read_checkpoint(dir + "/" + artifacts::encoder_ckpt(mode), "UFOE");
  if (mlps.size() != 1) throw IoError("encoder checkpoint must hold 1 MLP");
  BackgroundEncoder e;
  e.trainable_map = std::move(mlps[0]);
  e.out_dim = int(e.trainable_map.out_dim());
  if (e.out_dim != cfg.dims.embed_dim) {
    throw StaleArtifactError("encoder checkpoint embed dim " + std::to_string(e.out_dim) +
                             " does not match config " + std::to_string(cfg.dims.embed_dim));
  }
  return e;
}

int eval_depth(const PipelineConfig& cfg, std::size_t catalog_size) {
  int depth = 25;
  depth = std::max(depth, cfg.eval.map_cutoff);
  for (int k : cfg.eval.ks) depth = std::max(depth, k);
  if (cfg.eval.map_all) depth = int(catalog_size);
  return std::min<int>(depth, int(catalog_size));
}

}  // namespace

void stage_gen_data(const PipelineConfig& cfg, const std::string& dir, std::ostream& out) {
  cfg.world.validate();
  std::filesystem::create_directories(dir);
  const World world = generate_world(cfg.world);
  write_world(world, dir, cfg.to_json_string());
  manifest_append(dir, "gen-data", cfg, {}, kWorldFiles);
  out << "gen-data: " << world.backgrounds.size() << " backgrounds ("
      << world.train_bg_ids.size() << " train / " << world.eval_bg_ids.size() << " eval), "
      << world.foregrounds.size() << " foregrounds, mean oracle set size "
      << format_double(world.mean_oracle_set_size) << "\n";
}

void stage_train_disc(const PipelineConfig& cfg, const std::string& dir, std::ostream& out) {
  require_world(dir);
  const World world = read_world(cfg.world, dir);
  Discriminator d = Discriminator::make(cfg.world.context_dim, cfg.world.feature_dim,
                                        cfg.dims.disc_h1, cfg.dims.disc_h2,
                                        seed_fold(cfg.seed, "disc"));
  const DiscTrainResult result = train_discriminator(d, world, world.train_bg_ids, cfg.disc);
  write_checkpoint(dir + "/" + artifacts::kDiscCkpt, "UFOD",
                   {&d.frozen_featurizer, &d.trainable_head});
  {
    std::ostringstream log;
    log << "# config " << cfg.to_json_string() << "\n";
    for (std::size_t e = 0; e < result.train_loss.size(); ++e) {
      log << "epoch:" << e << " train_bce:" << format_double(result.train_loss[e]);
      if (e < result.val_loss.size()) log << " val_bce:" << format_double(result.val_loss[e]);
      log << "\n";
    }
    write_text_file(dir + "/disc_train.log", log.str());
  }
  manifest_append(dir, "train-disc", cfg, kWorldFiles, {artifacts::kDiscCkpt},
                  {"disc_train.log"});
  out << "train-disc: " << result.epochs_run << " epochs, best epoch " << result.best_epoch
      << ", final val bce "
      << format_double(result.val_loss.empty() ? 0.0 : result.val_loss.back()) << "\n";
}

void stage_gen_triplets(const PipelineConfig& cfg, const std::string& dir, std::ostream& out) {
  require_world(dir);
  require_artifact(dir, artifacts::kDiscCkpt, "discriminator");
  const World world = read_world(cfg.world, dir);
  const Discriminator d = load_disc(cfg, dir);
  TripletGenSummary summary;
  const auto triplets = generate_triplets(world, d, cfg.sampling, &summary);
  write_triplets(dir + "/" + artifacts::kTriplets, triplets, cfg.to_json_string());
  manifest_append(dir, "gen-triplets", cfg,
                  {artifacts::kForegrounds, artifacts::kBackgrounds, artifacts::kFgFeatures,
                   artifacts::kBgFeatures, artifacts::kDiscCkpt},
                  {artifacts::kTriplets});
  out << "gen-triplets: " << triplets.size() << " triplets (" << summary.mined_triplets
      << " mined positives, " << summary.original_triplets << " original), "
      << summary.backgrounds_skipped << " of " << summary.backgrounds_processed
      << " backgrounds skipped with no confident negative\n";
}

void stage_train_encoder(const PipelineConfig& cfg, const std::string& dir, TrainMode mode,
                         std::ostream& out) {
  require_world(dir);
  std::vector<Triplet> triplets;
  std::vector<std::string> inputs = {artifacts::kForegrounds, artifacts::kBackgrounds,
                                     artifacts::kFgFeatures, artifacts::kBgFeatures};
  const bool remine = mode == TrainMode::ufo && cfg.train.remine_every > 0;
  if (mode == TrainMode::ufo && !remine) {
    require_artifact(dir, artifacts::kTriplets, "gen-triplets");
    triplets = read_triplets(dir + "/" + artifacts::kTriplets);
    inputs.push_back(artifacts::kTriplets);
  }
  if (remine) {
    require_artifact(dir, artifacts::kDiscCkpt, "discriminator");
    inputs.push_back(artifacts::kDiscCkpt);
  }
  const World world = read_world(cfg.world, dir);
  const ForegroundEncoder fg_encoder = make_fg_encoder(cfg);
  TrainConfig tcfg = cfg.train;
  tcfg.mode = mode;
  TrainResult result;
  if (remine) {
    const Discriminator d = load_disc(cfg, dir);
    const TripletSource source = [&](int segment) {
      SamplingConfig salted = cfg.sampling;
      salted.seed = seed_fold(cfg.sampling.seed, std::uint64_t(segment));
      return generate_triplets(world, d, salted);
    };
    result = train_encoder(world, fg_encoder, make_bg_encoder(cfg), source, tcfg);
  } else {
    result = train_encoder(world, fg_encoder, make_bg_encoder(cfg), triplets, tcfg);
  }
  write_checkpoint(dir + "/" + artifacts::encoder_ckpt(mode), "UFOE",
                   {&result.encoder.trainable_map});
  const std::string log_name = "train_" + to_string(mode) + ".log";
  write_train_log(dir + "/" + log_name, result.log, cfg.to_json_string());
  manifest_append(dir, "train-encoder:" + to_string(mode), cfg, inputs,
                  {artifacts::encoder_ckpt(mode)}, {log_name});
  out << "train-encoder(" << to_string(mode) << "): " << tcfg.iterations
      << " iterations, mean loss " << format_double(result.initial_mean_loss) << " -> "
      << format_double(result.final_mean_loss) << "\n";
}

void stage_build_index(const PipelineConfig& cfg, const std::string& dir, std::ostream& out) {
  require_world(dir);
  const World world = read_world(cfg.world, dir);
  const ForegroundEncoder fg_encoder = make_fg_encoder(cfg);
  const Mat catalog = embed_foreground_catalog(fg_encoder, world.foregrounds);
  std::vector<ObjectId> ids(world.foregrounds.size());
  std::iota(ids.begin(), ids.end(), 0);
  IndexParams params;
  params.kind = cfg.index.kind == "clustered" ? IndexKind::clustered : IndexKind::exact;
  params.n_list = cfg.index.n_list;
  params.n_probe = cfg.index.n_probe;
  params.kmeans_iters = cfg.index.kmeans_iters;
  params.seed = cfg.index.seed;
  const VectorIndex index = VectorIndex::build(catalog, ids, params);
  index.save(dir + "/" + artifacts::kIndex);
  manifest_append(dir, "build-index", cfg,
                  {artifacts::kForegrounds, artifacts::kFgFeatures}, {artifacts::kIndex});
  out << "build-index: kind " << cfg.index.kind << ", " << index.size() << " vectors, dim "
      << index.dim() << ", n_list " << index.n_list() << "\n";
}

void stage_query(const PipelineConfig& cfg, const std::string& dir, ObjectId bg_id, int k,
                 TrainMode encoder_mode, std::ostream& out) {
  require_world(dir);
  require_artifact(dir, artifacts::kIndex, "build-index");
  require_artifact(dir, artifacts::encoder_ckpt(encoder_mode),
                   "train-encoder:" + to_string(encoder_mode));
  const World world = read_world(cfg.world, dir);
  const BackgroundEncoder encoder = load_encoder(cfg, dir, encoder_mode);
  const VectorIndex index = VectorIndex::load(dir + "/" + artifacts::kIndex);
  const RankedList ranking = index.query(embed_background(encoder, world.bg(bg_id)), k);
  for (std::size_t i = 0; i < ranking.entries.size(); ++i) {
    out << (i + 1) << " " << ranking.entries[i].first << " "
        << format_double(ranking.entries[i].second) << "\n";
  }
}

void stage_eval(const PipelineConfig& cfg, const std::string& dir,
                const std::vector<EvalMode>& modes, std::ostream& out) {
  require_world(dir);
  const World world = read_world(cfg.world, dir);
  const int depth = eval_depth(cfg, world.foregrounds.size());

  std::vector<std::string> inputs = {artifacts::kForegrounds, artifacts::kBackgrounds,
                                     artifacts::kOracleEval, artifacts::kFgFeatures,
                                     artifacts::kBgFeatures};
  std::vector<ModeMetrics> metrics;
  for (EvalMode mode : modes) {
    std::vector<RankedList> rankings;
    double mean_us = 0.0, p99_us = 0.0;
    if (mode == EvalMode::shape) {
      for (ObjectId bid : world.eval_bg_ids) {
        rankings.push_back(shape_baseline_rank(world.bg(bid), world.foregrounds));
      }
    } else if (mode == EvalMode::discriminator_only) {
      require_artifact(dir, artifacts::kDiscCkpt, "train-disc");
      const Discriminator d = load_disc(cfg, dir);
      std::vector<double> ms;
      for (ObjectId bid : world.eval_bg_ids) {
        double wall = 0.0;
        rankings.push_back(discriminator_only_rank(d, world, world.bg(bid), &wall));
        ms.push_back(wall * 1000.0);
      }
      if (!ms.empty()) {
        mean_us = std::accumulate(ms.begin(), ms.end(), 0.0) / double(ms.size());
      }
    } else {
      const TrainMode tmode = train_mode_from_string(to_string(mode));
      require_artifact(dir, artifacts::kIndex, "build-index");
      require_artifact(dir, artifacts::encoder_ckpt(tmode),
                       "train-encoder:" + to_string(tmode));
      const BackgroundEncoder encoder = load_encoder(cfg, dir, tmode);
      const VectorIndex index = VectorIndex::load(dir + "/" + artifacts::kIndex);
      rankings = rank_eval_queries(encoder, world, index, depth, &mean_us, &p99_us);
    }
    ModeMetrics m = evaluate_rankings(mode, rankings, world, cfg.eval);
    m.mean_query_us = mean_us;
    m.p99_query_us = p99_us;
    metrics.push_back(std::move(m));
  }

  write_text_file(dir + "/" + artifacts::kMetrics,
                  "# config " + cfg.to_json_string() + "\n" + metrics_records(metrics));
  write_text_file(dir + "/" + artifacts::kMetricsTable,
                  metrics_table(metrics, cfg.world.n_categories));
  write_text_file(dir + "/timings_eval.txt", timing_records(metrics));
  manifest_append(dir, "eval", cfg, inputs,
                  {artifacts::kMetrics, artifacts::kMetricsTable}, {"timings_eval.txt"});
  out << metrics_table(metrics, cfg.world.n_categories);
}

void stage_bench_random(const PipelineConfig& cfg, const std::string& dir,
                        const BenchRandomArgs& args, std::ostream& out) {
  std::filesystem::create_directories(dir);
  Rng rng(seed_fold(cfg.seed, "bench-random"));
  Mat centers(std::max(0, args.n_centers), args.dim);
  for (Index i = 0; i < centers.rows(); ++i) {
    for (Index j = 0; j < centers.cols(); ++j) centers(i, j) = rng.normal();
    centers.row(i) /= centers.row(i).norm();
  }
  auto draw_rows = [&](Mat& m) {
    for (Index i = 0; i < m.rows(); ++i) {
      if (centers.rows() > 0) {
        const Index c = Index(rng.below(std::uint64_t(centers.rows())));
        for (Index j = 0; j < m.cols(); ++j) {
          m(i, j) = centers(c, j) + args.cluster_sigma * rng.normal();
        }
      } else {
        for (Index j = 0; j < m.cols(); ++j) m(i, j) = rng.normal();
      }
      m.row(i) /= m.row(i).norm();
    }
  };
  Mat rows(args.n, args.dim);
  draw_rows(rows);
  std::vector<ObjectId> ids(static_cast<std::size_t>(args.n));
  std::iota(ids.begin(), ids.end(), 0);

  IndexParams exact_params;
  exact_params.kind = IndexKind::exact;
  IndexParams ivf_params;
  ivf_params.kind = IndexKind::clustered;
  ivf_params.n_list = cfg.index.n_list;
  ivf_params.n_probe = cfg.index.n_probe;
  ivf_params.kmeans_iters = cfg.index.kmeans_iters;
  ivf_params.seed = cfg.index.seed;

  const VectorIndex exact = VectorIndex::build(rows, ids, exact_params);
  const VectorIndex clustered = VectorIndex::build(rows, ids, ivf_params);

  Mat queries(args.n_queries, args.dim);
  draw_rows(queries);
  const BenchReport rep = bench(exact, clustered, queries, args.k);

  std::ostringstream rec;
  rec << "section:index n:" << args.n << " dim:" << args.dim << " k:" << args.k
      << " n_centers:" << args.n_centers
      << " n_list:" << clustered.n_list() << " n_probe:" << clustered.n_probe()
      << " recall_at_k:" << format_double(rep.recall_at_k)
      << " mean_us_exact:" << format_double(rep.mean_us_exact)
      << " p99_us_exact:" << format_double(rep.p99_us_exact)
      << " mean_us_clustered:" << format_double(rep.mean_us_clustered)
      << " p99_us_clustered:" << format_double(rep.p99_us_clustered) << "\n";
  out << rec.str();
  std::ofstream file(dir + "/bench_report.txt", std::ios::app);
  file << rec.str();
}

void stage_bench_world(const PipelineConfig& cfg, const std::string& dir, int n_queries,
                       std::ostream& out) {
  using Clock = std::chrono::steady_clock;
  require_world(dir);
  require_artifact(dir, artifacts::kDiscCkpt, "train-disc");
  require_artifact(dir, artifacts::kIndex, "build-index");
  require_artifact(dir, artifacts::encoder_ckpt(TrainMode::ufo), "train-encoder:ufo");
  const World world = read_world(cfg.world, dir);
  const Discriminator d = load_disc(cfg, dir);
  const BackgroundEncoder encoder = load_encoder(cfg, dir, TrainMode::ufo);
  const VectorIndex index = VectorIndex::load(dir + "/" + artifacts::kIndex);

  std::vector<ObjectId> queries = world.eval_bg_ids;
  if (int(queries.size()) > n_queries) queries.resize(std::size_t(n_queries));
  if (queries.empty()) throw ValidationError("bench: no eval backgrounds");

  double disc_total_ms = 0.0, index_total_ms = 0.0;
  for (ObjectId bid : queries) {
    double wall = 0.0;
    discriminator_only_rank(d, world, world.bg(bid), &wall);
    disc_total_ms += wall;
    const auto t0 = Clock::now();
    const Vec e = embed_background(encoder, world.bg(bid));
    (void)index.query(e, 25);
    index_total_ms += std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
  }
  const double ratio = disc_total_ms / std::max(1e-9, index_total_ms);
  std::ostringstream rec;
  rec << "section:coupled n_catalog:" << world.foregrounds.size()
      << " n_queries:" << queries.size()
      << " disc_total_ms:" << format_double(disc_total_ms)
      << " embed_query_total_ms:" << format_double(index_total_ms)
      << " ratio:" << format_double(ratio) << "\n";
  out << rec.str();
  std::ofstream file(dir + "/bench_report.txt", std::ios::app);
  file << rec.str();
}

void stage_ablate(const PipelineConfig& cfg, const std::string& dir,
                  const std::vector<EvalMode>& modes, std::ostream& out) {
  require_world(dir);
  const World world = read_world(cfg.world, dir);
  AblationConfig acfg;
  acfg.train = cfg.train;
  acfg.disc = cfg.disc;
  acfg.sampling = cfg.sampling;
  acfg.eval = cfg.eval;
  acfg.enc_hidden = cfg.dims.enc_hidden;
  acfg.embed_dim = cfg.dims.embed_dim;
  acfg.disc_h1 = cfg.dims.disc_h1;
  acfg.disc_h2 = cfg.dims.disc_h2;
  acfg.seed = cfg.seed;
  const auto metrics = run_ablation_matrix(world, modes, acfg);
  write_text_file(dir + "/ablate_metrics.txt",
                  "# config " + cfg.to_json_string() + "\n" + metrics_records(metrics));
  write_text_file(dir + "/ablate_table.txt", metrics_table(metrics, cfg.world.n_categories));
  write_text_file(dir + "/ablate_timings.txt", timing_records(metrics));
  manifest_append(dir, "ablate", cfg,
                  {artifacts::kForegrounds, artifacts::kBackgrounds, artifacts::kOracleEval,
                   artifacts::kFgFeatures, artifacts::kBgFeatures},
                  {"ablate_metrics.txt", "ablate_table.txt"}, {"ablate_timings.txt"});
  out << metrics_table(metrics, cfg.world.n_categories);
}

}  // namespace ufo

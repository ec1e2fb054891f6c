// Acceptance suite: one pass/fail line per criterion, nonzero exit if any
// criterion fails. Criteria needing pipeline artifacts drive the CLI binary
// (--cli); everything else runs in-process.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "ufo/eval.hpp"
#include "ufo/io.hpp"
#include "ufo/pipeline.hpp"

using namespace ufo;
using Clock = std::chrono::steady_clock;

namespace {

struct Options {
  std::string cli = "./ufo";
  std::string scratch = "/tmp/ufo_acceptance";
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int run_cli(const Options& opt, const std::string& args) {
  const std::string cmd =
      opt.cli + " " + args + " >> " + opt.scratch + "/cli.log 2>&1";
  return std::system(cmd.c_str());
}

// ---------------------------------------------------------------------------
// Criterion 1: analytic gradients vs central finite differences (h = 1e-5)
// ---------------------------------------------------------------------------

std::vector<double*> param_pointers(MlpParams& p) {
  std::vector<double*> ptrs;
  for (auto& l : p.layers) {
    for (Index i = 0; i < l.W.size(); ++i) ptrs.push_back(l.W.data() + i);
    for (Index i = 0; i < l.b.size(); ++i) ptrs.push_back(l.b.data() + i);
  }
  return ptrs;
}

std::vector<double> flatten(const MlpGrads& g) {
  std::vector<double> flat;
  for (const auto& l : g.layers) {
    for (Index i = 0; i < l.dW.size(); ++i) flat.push_back(l.dW.data()[i]);
    for (Index i = 0; i < l.db.size(); ++i) flat.push_back(l.db.data()[i]);
  }
  return flat;
}

double max_rel_err(const std::vector<double>& a, const std::vector<double>& n) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(n[i]), 1e-6});
    worst = std::max(worst, std::abs(a[i] - n[i]) / denom);
  }
  return worst;
}

std::vector<double> central_diff(MlpParams& p, const std::function<double()>& loss,
                                 double h = 1e-5) {
  std::vector<double> grad;
  for (double* theta : param_pointers(p)) {
    const double saved = *theta;
    *theta = saved + h;
    const double up = loss();
    *theta = saved - h;
    const double down = loss();
    *theta = saved;
    grad.push_back((up - down) / (2.0 * h));
  }
  return grad;
}

bool near_relu_kink(const MlpParams& p, const MlpForwardCache& cache,
                    double margin = 1e-4) {
  for (std::size_t k = 0; k < p.layers.size(); ++k) {
    if (p.layers[k].act != Activation::relu) continue;
    if ((cache.pre[k].array().abs() < margin).any()) return true;
  }
  return false;
}

MlpParams random_small_mlp(Rng& rng, Activation last = Activation::identity) {
  const int n_layers = 1 + int(rng.below(3));
  std::vector<int> dims{2 + int(rng.below(15))};
  std::vector<Activation> acts;
  for (int l = 0; l < n_layers; ++l) {
    dims.push_back(2 + int(rng.below(15)));
    acts.push_back(l + 1 == n_layers ? last : Activation::relu);
  }
  return make_mlp(dims, acts, rng.next_u64());
}

Vec random_vec(Rng& rng, Index n) {
  Vec v(n);
  for (Index i = 0; i < n; ++i) v[i] = rng.normal();
  return v;
}

double check_mlp_gradients(int configs) {
  Rng rng(101);
  double worst = 0.0;
  int done = 0;
  while (done < configs) {
    MlpParams p = random_small_mlp(rng);
    const Vec x = random_vec(rng, p.in_dim());
    const Vec upstream = random_vec(rng, p.out_dim());
    MlpForwardCache cache;
    mlp_forward_cached(p, Mat(x.transpose()), cache);
    if (near_relu_kink(p, cache)) continue;
    const auto analytic = flatten(mlp_backward(p, x, upstream));
    const auto numeric =
        central_diff(p, [&]() { return mlp_forward(p, x).dot(upstream); });
    worst = std::max(worst, max_rel_err(analytic, numeric));
    ++done;
  }
  return worst;
}

double check_triplet_gradients(int configs) {
  Rng rng(202);
  double worst = 0.0;
  int done = 0;
  while (done < configs) {
    BackgroundEncoder enc;
    enc.trainable_map = random_small_mlp(rng);
    enc.out_dim = int(enc.trainable_map.out_dim());
    const int rows = 2;
    TripletBatch batch;
    batch.bg_inputs = Mat(rows, enc.trainable_map.in_dim());
    for (Index i = 0; i < batch.bg_inputs.size(); ++i) {
      batch.bg_inputs.data()[i] = rng.normal();
    }
    batch.pos_embed = Mat(rows, enc.out_dim);
    batch.neg_embed = Mat(rows, enc.out_dim);
    for (Index i = 0; i < rows; ++i) {
      batch.pos_embed.row(i) = l2_normalize(random_vec(rng, enc.out_dim)).transpose();
      batch.neg_embed.row(i) = l2_normalize(random_vec(rng, enc.out_dim)).transpose();
    }

    // Independent loss path: forward + explicit normalization + hinge.
    const double margin = 0.3;
    const auto loss_by_hand = [&]() {
      double total = 0.0;
      for (Index i = 0; i < rows; ++i) {
        const Vec y =
            mlp_forward(enc.trainable_map, Vec(batch.bg_inputs.row(i).transpose()));
        const Vec u = y / y.norm();
        const double c_pos = u.dot(batch.pos_embed.row(i).transpose());
        const double c_neg = u.dot(batch.neg_embed.row(i).transpose());
        total += std::max(0.0, c_neg + margin - c_pos);
      }
      return total / double(rows);
    };

    MlpForwardCache cache;
    const Mat raw = mlp_forward_cached(enc.trainable_map, batch.bg_inputs, cache);
    if (near_relu_kink(enc.trainable_map, cache)) continue;
    if ((raw.rowwise().norm().array() < 1e-3).any()) continue;  // relu zeroed a row
    // Every triplet strictly active, away from the hinge kink.
    bool active = true;
    for (Index i = 0; i < rows; ++i) {
      const Vec y =
          mlp_forward(enc.trainable_map, Vec(batch.bg_inputs.row(i).transpose()));
      const Vec u = y / y.norm();
      const double slack = u.dot(batch.neg_embed.row(i).transpose()) + margin -
                           u.dot(batch.pos_embed.row(i).transpose());
      if (slack < 1e-3) active = false;
    }
    if (!active) continue;

    const auto analytic = flatten(loss_gradient(enc, batch, margin));
    const auto numeric = central_diff(enc.trainable_map, loss_by_hand);
    worst = std::max(worst, max_rel_err(analytic, numeric));
    ++done;
  }
  return worst;
}

double check_bce_gradients(int configs) {
  Rng rng(303);
  double worst = 0.0;
  int done = 0;
  while (done < configs) {
    const int in = 3 + int(rng.below(12));
    const int frozen_out = 3 + int(rng.below(12));
    const int hidden = 2 + int(rng.below(12));
    const std::vector<int> fdims{in, frozen_out};
    const std::vector<Activation> facts{Activation::relu};
    const MlpParams frozen = make_mlp(fdims, facts, rng.next_u64());
    const std::vector<int> hdims{frozen_out, hidden, 1};
    const std::vector<Activation> hacts{Activation::relu, Activation::sigmoid};
    MlpParams head = make_mlp(hdims, hacts, rng.next_u64());

    const int rows = 4;
    Mat X(rows, in);
    Vec y(rows);
    for (Index i = 0; i < X.size(); ++i) X.data()[i] = rng.normal();
    for (Index i = 0; i < rows; ++i) y[i] = double(rng.below(2));
    const Mat H = mlp_forward(frozen, X);

    MlpForwardCache cache;
    mlp_forward_cached(head, H, cache);
    if (near_relu_kink(head, cache)) continue;

    Mat dz(rows, 1);
    for (Index i = 0; i < rows; ++i) {
      dz(i, 0) = (1.0 / (1.0 + std::exp(-cache.pre.back()(i, 0))) - y[i]) / double(rows);
    }
    const auto analytic = flatten(mlp_backward_from_logits(head, H, cache, dz));
    const auto numeric =
        central_diff(head, [&]() { return disc_cross_entropy(head, H, y); });
    worst = std::max(worst, max_rel_err(analytic, numeric));
    ++done;
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Shared run configuration for the ablation criteria
// ---------------------------------------------------------------------------

AblationConfig acceptance_train_config(std::uint64_t seed) {
  AblationConfig cfg;
  cfg.seed = seed;
  cfg.train.margin = 0.3;
  cfg.train.lr = 2e-3;
  cfg.train.iterations = 1500;
  cfg.train.batch_size = 64;
  cfg.train.remine_every = 250;
  cfg.disc.lr = 1e-3;
  cfg.disc.epochs = 40;
  cfg.disc.patience = 5;
  cfg.eval.map_cutoff = 100;
  cfg.eval.map_all = false;
  cfg.eval.ks = {5, 10, 15, 20, 25};
  return cfg;
}

double mode_map(const std::vector<ModeMetrics>& metrics, EvalMode mode) {
  for (const auto& m : metrics) {
    if (m.mode == mode) return m.overall_map;
  }
  return -1.0;
}

const ModeMetrics& mode_metrics(const std::vector<ModeMetrics>& metrics, EvalMode mode) {
  for (const auto& m : metrics) {
    if (m.mode == mode) return m;
  }
  throw Error("mode not found in metrics");
}

struct Criterion {
  int number;
  std::string name;
  std::function<bool(std::string&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  Options opt;
  for (int i = 1; i + 1 < argc; i += 2) {
    const std::string flag = argv[i];
    if (flag == "--cli") opt.cli = argv[i + 1];
    if (flag == "--scratch") opt.scratch = argv[i + 1];
  }
  std::filesystem::remove_all(opt.scratch);
  std::filesystem::create_directories(opt.scratch);

  // State shared across criteria (the default world and its trained filter).
  World crit3_world_seed1;
  Discriminator crit3_disc;
  bool have_seed1 = false;

  std::vector<Criterion> criteria;

  criteria.push_back(
      {1, "gradient correctness (mlp, triplet loss, discriminator bce)",
       [&](std::string& details) {
         const auto t0 = Clock::now();
         const double mlp_err = check_mlp_gradients(50);
         const double triplet_err = check_triplet_gradients(50);
         const double bce_err = check_bce_gradients(50);
         const double secs = seconds_since(t0);
         char buf[192];
         std::snprintf(buf, sizeof(buf),
                       "max rel err: mlp %.2e, triplet %.2e, bce %.2e; %.1f s", mlp_err,
                       triplet_err, bce_err, secs);
         details = buf;
         return mlp_err < 1e-4 && triplet_err < 1e-4 && bce_err < 1e-4 && secs < 10.0;
       }});

  criteria.push_back(
      {2, "metric oracles (hand-computed AP, exhaustive P@K and diversity)",
       [&](std::string& details) {
         struct Case {
           std::vector<int> flags;
           int extra;
           std::size_t cutoff;
           double expected;
         };
         const std::vector<Case> cases = {
             {{1, 0, 1}, 0, kNoCutoff, 5.0 / 6.0},
             {{1, 1, 0, 0}, 0, kNoCutoff, 1.0},
             {{0, 0, 0}, 2, kNoCutoff, 0.0},
             {{0, 1}, 0, kNoCutoff, 0.5},
             {{1, 0, 0, 1}, 0, kNoCutoff, 3.0 / 4.0},
             {{0, 1, 1}, 0, kNoCutoff, 7.0 / 12.0},
             {{0, 1, 1}, 0, 2, 1.0 / 4.0},
             {{1, 1, 1}, 2, 1, 1.0},
             {{1, 1, 1, 1}, 1, 3, 1.0},
             {{1, 1, 0, 1, 0, 1}, 0, kNoCutoff, 41.0 / 48.0},
             {{1, 0, 1}, 1, kNoCutoff, 5.0 / 9.0},
             {{1, 0, 1}, 0, 100, 5.0 / 6.0},
         };
         double worst = 0.0;
         for (const auto& c : cases) {
           RankedList r;
           std::unordered_set<ObjectId> rel;
           for (std::size_t i = 0; i < c.flags.size(); ++i) {
             r.entries.emplace_back(ObjectId(i), 1.0 - 0.01 * double(i));
             if (c.flags[i]) rel.insert(ObjectId(i));
           }
           for (int e = 0; e < c.extra; ++e) rel.insert(ObjectId(1000 + e));
           worst = std::max(worst,
                            std::abs(average_precision(r, rel, c.cutoff) - c.expected));
         }

         WorldConfig wc = WorldConfig::defaults(55);
         wc.n_backgrounds = 120;
         wc.n_foregrounds = 400;
         wc.feature_dim = 16;
         wc.context_dim = 16;
         wc.compat_table = WorldConfig::default_compat_table(8, wc.n_categories, 55);
         const World w = generate_world(wc);
         Rng rng(56);
         std::vector<ObjectId> ids(w.foregrounds.size());
         std::iota(ids.begin(), ids.end(), 0);
         bool counting_ok = true;
         for (int trial = 0; trial < 25; ++trial) {
           const auto& b = w.bg(w.eval_bg_ids[rng.below(w.eval_bg_ids.size())]);
           rng.shuffle(ids);
           RankedList r;
           r.query_id = b.id;
           double score = 1.0;
           for (ObjectId id : ids) r.entries.emplace_back(id, score -= 1e-6);
           for (int k : {5, 10, 25}) {
             int count = 0;
             for (int i = 0; i < k; ++i) {
               if (w.oracle_label(b, w.fg(ids[std::size_t(i)]))) ++count;
             }
             if (std::abs(precision_at_k(r, w, b, k) - double(count) / k) > 1e-15) {
               counting_ok = false;
             }
           }
           std::set<int> cats;
           for (int i = 0; i < 25; ++i) {
             const auto& f = w.fg(ids[std::size_t(i)]);
             if (w.oracle_label(b, f)) cats.insert(f.category);
           }
           if (diversity_top25(r, w, b) != int(cats.size())) counting_ok = false;
         }
         char buf[128];
         std::snprintf(buf, sizeof(buf), "AP worst abs err %.2e; counting oracles %s",
                       worst, counting_ok ? "agree" : "disagree");
         details = buf;
         return worst < 1e-12 && counting_ok;
       }});

  criteria.push_back(
      {3, "ablation ordering on the default world (3 seeds, mAP@100)",
       [&](std::string& details) {
         const auto t0 = Clock::now();
         const std::vector<EvalMode> modes = {EvalMode::ufo, EvalMode::no_discriminator,
                                              EvalMode::regression,
                                              EvalMode::no_bg_training, EvalMode::shape};
         double ufo = 0, no_disc = 0, regression = 0, no_bg = 0, shape = 0;
         for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
           const WorldConfig wc = WorldConfig::defaults(seed_fold(seed, "world"));
           const World w = generate_world(wc);
           AblationConfig cfg = acceptance_train_config(seed);
           const auto metrics = run_ablation_matrix(w, modes, cfg);
           ufo += mode_map(metrics, EvalMode::ufo) / 3.0;
           no_disc += mode_map(metrics, EvalMode::no_discriminator) / 3.0;
           regression += mode_map(metrics, EvalMode::regression) / 3.0;
           no_bg += mode_map(metrics, EvalMode::no_bg_training) / 3.0;
           shape += mode_map(metrics, EvalMode::shape) / 3.0;
           if (seed == 1) {
             crit3_world_seed1 = w;
             Discriminator d =
                 Discriminator::make(wc.context_dim, wc.feature_dim, 128, 64,
                                     seed_fold(seed, "disc"));
             DiscTrainConfig dcfg = cfg.disc;
             dcfg.seed = seed_fold(seed, "disc-train");
             train_discriminator(d, w, w.train_bg_ids, dcfg);
             crit3_disc = d;
             have_seed1 = true;
           }
         }
         const double secs = seconds_since(t0);
         char buf[256];
         std::snprintf(buf, sizeof(buf),
                       "mAP@100 (pts): ufo %.2f, no_disc %.2f, regression %.2f, no_bg "
                       "%.2f, shape %.2f; %.0f s",
                       100 * ufo, 100 * no_disc, 100 * regression, 100 * no_bg,
                       100 * shape, secs);
         details = buf;
         const double two_points = 0.02;
         return ufo - no_disc >= two_points && no_disc - no_bg >= two_points &&
                ufo - regression >= two_points && ufo - shape >= two_points &&
                secs < 900.0;
       }});

  criteria.push_back(
      {4, "triplet filter soundness (re-score the emitted file)",
       [&](std::string& details) {
         const std::string dir = opt.scratch + "/pipeline_a";
         const PipelineConfig cfg = PipelineConfig::from_json_string(
             read_text_file(opt.scratch + "/pipeline_config.json"));
         const World w = read_world(cfg.world, dir);
         auto mlps = read_checkpoint(dir + "/" + artifacts::kDiscCkpt, "UFOD");
         Discriminator d;
         d.frozen_featurizer = std::move(mlps[0]);
         d.trainable_head = std::move(mlps[1]);
         const auto triplets = read_triplets(dir + "/" + artifacts::kTriplets);
         std::size_t mined = 0, violations = 0;
         for (const auto& t : triplets) {
           const auto& b = w.bg(t.background_id);
           const double pos = disc_score(d, b, w.fg(t.positive_id));
           const double neg = disc_score(d, b, w.fg(t.negative_id));
           if (neg >= cfg.sampling.t_low) ++violations;
           if (t.provenance == Triplet::Provenance::mined) {
             ++mined;
             if (pos <= cfg.sampling.t_high) ++violations;
           }
         }
         details = std::to_string(triplets.size()) + " triplets (" +
                   std::to_string(mined) + " mined), " + std::to_string(violations) +
                   " threshold violations on re-scoring";
         return !triplets.empty() && mined > 0 && violations == 0;
       }});

  criteria.push_back(
      {5, "sampling speedup (heuristic probes <= 0.5x random)",
       [&](std::string& details) {
         const auto t0 = Clock::now();
         if (!have_seed1) {
           details = "criterion 3 did not provide the default world";
           return false;
         }
         SamplingConfig scfg;
         scfg.seed = seed_fold(1, "triplets");
         const SpeedupReport rep =
             measure_sampling_speedup(crit3_world_seed1, crit3_disc, scfg, 200);
         const double secs = seconds_since(t0);
         char buf[192];
         std::snprintf(buf, sizeof(buf),
                       "heuristic %.2f vs random %.2f probes over %d backgrounds "
                       "(censored %d/%d); %.0f s",
                       rep.avg_probes_heuristic, rep.avg_probes_random, rep.n_backgrounds,
                       rep.censored_heuristic, rep.censored_random, secs);
         details = buf;
         return rep.n_backgrounds >= 200 &&
                rep.avg_probes_heuristic <= 0.5 * rep.avg_probes_random && secs < 120.0;
       }});

  criteria.push_back(
      {6, "index contracts (oracle equality, recall@25 >= 0.9, latency)",
       [&](std::string& details) {
         Rng rng(606);
         const int n_small = 400, dim_small = 16;
         Mat rows(n_small, dim_small);
         for (Index i = 0; i < rows.rows(); ++i) {
           for (Index j = 0; j < rows.cols(); ++j) rows(i, j) = rng.normal();
           rows.row(i) /= rows.row(i).norm();
         }
         std::vector<ObjectId> ids(static_cast<std::size_t>(n_small));
         std::iota(ids.begin(), ids.end(), 0);
         const VectorIndex small_exact = VectorIndex::build(rows, ids, IndexParams{});
         bool oracle_ok = true;
         for (int trial = 0; trial < 50 && oracle_ok; ++trial) {
           Vec q = random_vec(rng, dim_small);
           q /= q.norm();
           const int k = 1 + int(rng.below(30));
           const RankedList got = small_exact.query(q, k);
           std::vector<std::pair<ObjectId, double>> want;
           for (Index i = 0; i < rows.rows(); ++i) {
             want.emplace_back(ids[std::size_t(i)],
                               std::clamp(rows.row(i).dot(q), -1.0, 1.0));
           }
           std::sort(want.begin(), want.end(), ranked_before);
           want.resize(std::size_t(k));
           for (std::size_t i = 0; i < want.size(); ++i) {
             if (got.entries[i].first != want[i].first) oracle_ok = false;
           }
         }

         // 50k vectors drawn from the index's operating distribution:
         // clustered unit vectors (see decisions ledger on uniform data).
         const int n = 50000, dim = 128, centers = 256;
         const double sigma = 0.12;
         Rng mix(607);
         Mat cdirs(centers, dim);
         for (Index i = 0; i < cdirs.rows(); ++i) {
           for (Index j = 0; j < cdirs.cols(); ++j) cdirs(i, j) = mix.normal();
           cdirs.row(i) /= cdirs.row(i).norm();
         }
         auto draw = [&](Mat& m) {
           for (Index i = 0; i < m.rows(); ++i) {
             const Index c = Index(mix.below(centers));
             for (Index j = 0; j < m.cols(); ++j) {
               m(i, j) = cdirs(c, j) + sigma * mix.normal();
             }
             m.row(i) /= m.row(i).norm();
           }
         };
         Mat big(n, dim);
         draw(big);
         std::vector<ObjectId> big_ids(static_cast<std::size_t>(n));
         std::iota(big_ids.begin(), big_ids.end(), 0);
         const VectorIndex exact = VectorIndex::build(big, big_ids, IndexParams{});
         IndexParams cp;
         cp.kind = IndexKind::clustered;
         cp.n_probe = 4;
         cp.seed = 608;
         VectorIndex clustered = VectorIndex::build(big, big_ids, cp);
         Mat queries(100, dim);
         draw(queries);
         const BenchReport rep = bench(exact, clustered, queries, 25);

         clustered.set_n_probe(clustered.n_list());
         const BenchReport full = bench(exact, clustered, Mat(queries.topRows(20)), 25);

         char buf[256];
         std::snprintf(buf, sizeof(buf),
                       "oracle %s; recall@25 %.4f at n_probe 4, %.4f exhaustive; mean "
                       "query %.0f us clustered vs %.0f us exact",
                       oracle_ok ? "equal" : "DIFFERS", rep.recall_at_k, full.recall_at_k,
                       rep.mean_us_clustered, rep.mean_us_exact);
         details = buf;
         return oracle_ok && rep.recall_at_k >= 0.9 &&
                rep.mean_us_clustered < rep.mean_us_exact && full.recall_at_k == 1.0;
       }});

  criteria.push_back(
      {7, "coupled vs de-coupled cost at 50k (cmd_bench, >= 10x)",
       [&](std::string& details) {
         const std::string dir = opt.scratch + "/bench_world";
         PipelineConfig cfg = PipelineConfig::defaults(7);
         cfg.world.n_backgrounds = 200;
         cfg.world.n_foregrounds = 50000;
         cfg.disc.epochs = 4;
         cfg.train.iterations = 100;
         cfg.train.lr = 2e-3;
         cfg.sampling.max_probe = 200;
         cfg.resolve();
         const std::string config_path = opt.scratch + "/bench_config.json";
         write_text_file(config_path, cfg.to_json_string());
         const std::string base = "--config " + config_path + " --out-dir " + dir + " ";
         if (run_cli(opt, base + "gen-data") != 0 ||
             run_cli(opt, base + "train-disc") != 0 ||
             run_cli(opt, base + "gen-triplets") != 0 ||
             run_cli(opt, base + "train-encoder --mode ufo") != 0 ||
             run_cli(opt, base + "build-index") != 0 ||
             run_cli(opt, base + "bench --world --world-queries 3") != 0) {
           details = "pipeline or bench stage failed (see cli.log)";
           return false;
         }
         double ratio = -1.0, disc_ms = 0.0, index_ms = 0.0;
         std::ifstream report(dir + "/bench_report.txt");
         std::string line;
         while (std::getline(report, line)) {
           if (line.rfind("section:coupled", 0) != 0) continue;
           std::istringstream ss(line);
           std::string tok;
           while (ss >> tok) {
             const auto colon = tok.find(':');
             if (colon == std::string::npos) continue;
             const std::string key = tok.substr(0, colon);
             const std::string value = tok.substr(colon + 1);
             if (key == "ratio") ratio = parse_double(value);
             if (key == "disc_total_ms") disc_ms = parse_double(value);
             if (key == "embed_query_total_ms") index_ms = parse_double(value);
           }
         }
         char buf[192];
         std::snprintf(buf, sizeof(buf),
                       "discriminator-only %.0f ms vs embed+query %.2f ms over 3 "
                       "queries (ratio %.0fx)",
                       disc_ms, index_ms, ratio);
         details = buf;
         return ratio >= 10.0;
       }});

  criteria.push_back(
      {8, "determinism (bit-identical artifacts across two runs)",
       [&](std::string& details) {
         PipelineConfig cfg = PipelineConfig::defaults(8);
         cfg.world.n_backgrounds = 300;
         cfg.world.n_foregrounds = 900;
         cfg.world.feature_dim = 32;
         cfg.world.context_dim = 32;
         cfg.world.compat_table =
             WorldConfig::default_compat_table(8, cfg.world.n_categories, 8);
         cfg.dims.enc_hidden = 64;
         cfg.dims.embed_dim = 32;
         cfg.disc.epochs = 12;
         cfg.disc.lr = 1e-3;
         cfg.train.iterations = 300;
         cfg.train.lr = 2e-3;
         cfg.train.batch_size = 32;
         cfg.resolve();
         const std::string config_path = opt.scratch + "/pipeline_config.json";
         write_text_file(config_path, cfg.to_json_string());
         const std::vector<std::string> stages = {
             "gen-data",
             "train-disc",
             "gen-triplets",
             "train-encoder --mode ufo",
             "train-encoder --mode no_discriminator",
             "train-encoder --mode regression",
             "train-encoder --mode no_bg_training",
             "build-index",
             "eval --modes ufo,no_discriminator,shape,discriminator_only"};
         for (const char* which : {"a", "b"}) {
           const std::string dir = opt.scratch + "/pipeline_" + which;
           const std::string base = "--config " + config_path + " --out-dir " + dir + " ";
           for (const auto& stage : stages) {
             if (run_cli(opt, base + stage) != 0) {
               details = "stage '" + stage + "' failed in run " + which + " (see cli.log)";
               return false;
             }
           }
         }
         const std::vector<std::string> compare = {
             artifacts::kForegrounds,
             artifacts::kBackgrounds,
             artifacts::kOracleEval,
             artifacts::kFgFeatures,
             artifacts::kBgFeatures,
             artifacts::kDiscCkpt,
             artifacts::kTriplets,
             artifacts::encoder_ckpt(TrainMode::ufo),
             artifacts::encoder_ckpt(TrainMode::no_discriminator),
             artifacts::encoder_ckpt(TrainMode::regression),
             artifacts::encoder_ckpt(TrainMode::no_bg_training),
             artifacts::kIndex,
             artifacts::kMetrics,
             artifacts::kMetricsTable,
             artifacts::kManifest};
         std::size_t mismatches = 0;
         for (const auto& f : compare) {
           const std::string a = read_text_file(opt.scratch + "/pipeline_a/" + f);
           const std::string b = read_text_file(opt.scratch + "/pipeline_b/" + f);
           if (a != b) ++mismatches;
         }
         details = std::to_string(compare.size()) + " artifacts compared, " +
                   std::to_string(mismatches) + " mismatches";
         return mismatches == 0;
       }});

  criteria.push_back(
      {9, "diversity direction and P@25 ordering (multi-category world)",
       [&](std::string& details) {
         WorldConfig wc = WorldConfig::defaults(seed_fold(9, "world"));
         wc.noise_sigma = 0.3;
         wc.aspect_jitter = 1e6;  // fixed-hole analog: the gate never binds
         int multi = 0;
         for (const auto& row : wc.compat_table) {
           if (std::accumulate(row.begin(), row.end(), 0) >= 2) ++multi;
         }
         if (multi * 2 < wc.n_context_types()) {
           details = "world premise violated: too few multi-category contexts";
           return false;
         }
         const World w = generate_world(wc);
         AblationConfig cfg = acceptance_train_config(9);
         const std::vector<EvalMode> modes = {EvalMode::ufo, EvalMode::no_discriminator,
                                              EvalMode::discriminator_only};
         const auto metrics = run_ablation_matrix(w, modes, cfg);
         const auto& ufo_m = mode_metrics(metrics, EvalMode::ufo);
         const auto& nd = mode_metrics(metrics, EvalMode::no_discriminator);
         const auto& donly = mode_metrics(metrics, EvalMode::discriminator_only);
         char buf[256];
         std::snprintf(buf, sizeof(buf),
                       "diversity: disc_only %.2f vs no_disc %.2f; P@25: ufo %.2f, "
                       "disc_only %.2f, no_disc %.2f (%d/%d multi-category contexts)",
                       donly.diversity_mean, nd.diversity_mean,
                       100 * ufo_m.p_at_k.at(25), 100 * donly.p_at_k.at(25),
                       100 * nd.p_at_k.at(25), multi, wc.n_context_types());
         details = buf;
         return donly.diversity_mean >= nd.diversity_mean &&
                ufo_m.p_at_k.at(25) > donly.p_at_k.at(25) &&
                ufo_m.p_at_k.at(25) > nd.p_at_k.at(25);
       }});

  // Criterion 4 consumes criterion 8's artifacts, so 8 runs first.
  const std::vector<std::size_t> order = {0, 1, 5, 7, 3, 6, 2, 4, 8};

  int failures = 0;
  const auto t0 = Clock::now();
  std::vector<std::string> lines(criteria.size());
  for (std::size_t idx : order) {
    auto& c = criteria[idx];
    std::string details;
    bool pass = false;
    try {
      pass = c.run(details);
    } catch (const std::exception& e) {
      details = std::string("exception: ") + e.what();
    }
    char buf[512];
    std::snprintf(buf, sizeof(buf), "[%s] %d. %s -- %s", pass ? "PASS" : "FAIL",
                  c.number, c.name.c_str(), details.c_str());
    lines[idx] = buf;
    std::puts(buf);
    std::fflush(stdout);
    if (!pass) ++failures;
  }
  std::printf("\n%zu/%zu criteria passed in %.0f s\n",
              criteria.size() - std::size_t(failures), criteria.size(),
              seconds_since(t0));
  return failures == 0 ? 0 : 1;
}

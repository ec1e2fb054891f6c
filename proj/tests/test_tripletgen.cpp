#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>
#include <unordered_set>

#include "ufo/io.hpp"
#include "ufo/tripletgen.hpp"

using namespace ufo;

namespace {

WorldConfig small_world(std::uint64_t seed, double noise = 0.1) {
  WorldConfig cfg = WorldConfig::defaults(seed);
  cfg.n_backgrounds = 300;
  cfg.n_foregrounds = 900;
  cfg.feature_dim = 32;
  cfg.context_dim = 32;
  cfg.noise_sigma = noise;
  // few context types so the small world still trains a confident filter
  cfg.compat_table = WorldConfig::default_compat_table(8, cfg.n_categories, seed);
  return cfg;
}

WorldConfig identity_world(std::uint64_t seed) {
  WorldConfig cfg = small_world(seed, 0.0);
  cfg.compat_table.assign(std::size_t(cfg.n_categories),
                          std::vector<int>(std::size_t(cfg.n_categories), 0));
  for (int c = 0; c < cfg.n_categories; ++c) cfg.compat_table[std::size_t(c)][std::size_t(c)] = 1;
  return cfg;
}

// Discriminator that reads only the trailing input entry (the foreground's
// log aspect ratio): score = sigmoid(10 * log aspect). Lets the tests place
// pool members above/below the thresholds exactly.
Discriminator aspect_probe_disc(int context_dim, int feature_dim) {
  const int in = context_dim + 2 + feature_dim + 1;
  Discriminator d;
  d.frozen_featurizer.layers.push_back(
      {Mat::Identity(in, in), Vec::Zero(in), Activation::identity});
  Mat w = Mat::Zero(1, in);
  w(0, in - 1) = 10.0;
  d.trainable_head.layers.push_back({w, Vec::Zero(1), Activation::sigmoid});
  return d;
}

// Minimal hand-built world: one background, foregrounds with chosen aspects.
World toy_world(const std::vector<double>& fg_aspects) {
  World w;
  w.cfg = WorldConfig::defaults(1);
  w.cfg.n_categories = 1;
  w.cfg.n_backgrounds = 1;
  w.cfg.n_foregrounds = int(fg_aspects.size());
  w.cfg.feature_dim = 2;
  w.cfg.context_dim = 2;
  w.cfg.aspect_jitter = 1e12;
  w.cfg.compat_table = {{1}};
  for (std::size_t i = 0; i < fg_aspects.size(); ++i) {
    ForegroundObject f;
    f.id = ObjectId(i);
    f.category = 0;
    f.aspect_ratio = fg_aspects[i];
    f.feature = Vec::Ones(2);
    w.foregrounds.push_back(std::move(f));
  }
  BackgroundQuery b;
  b.id = 0;
  b.context_type = 0;
  b.hole_aspect_ratio = 1.0;
  b.context_feature = Vec::Ones(2);
  b.original_object_id = 0;
  for (const auto& f : w.foregrounds) b.oracle_compatible_ids.push_back(f.id);
  w.backgrounds.push_back(std::move(b));
  w.train_bg_ids = {0};
  return w;
}

}  // namespace

TEST_SUITE_BEGIN("tripletgen");

TEST_CASE("sampling config validation") {
  SamplingConfig cfg;
  cfg.k_c = cfg.k_g = cfg.n_random = 0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = SamplingConfig{};
  cfg.t_low = 0.9;
  CHECK_THROWS_AS(cfg.validate(), BadThresholdsError);
  cfg = SamplingConfig{};
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("degenerate config: pool is n_random uniform objects") {
  const World w = generate_world(small_world(3));
  const SamplingIndexes idx = build_sampling_indexes(w);
  SamplingConfig cfg;
  cfg.k_c = 0;
  cfg.k_g = 0;
  cfg.n_random = 5;
  cfg.seed = 7;
  const auto pool =
      build_candidate_pool(w, w.bg(w.train_bg_ids[0]), cfg, idx.bg_index, idx.fg_index);
  CHECK(pool.size() == 5);
  for (ObjectId id : pool) CHECK(id < w.foregrounds.size());
}

TEST_CASE("fg-heuristic entries match exhaustive cosine ranking in a noise-free world") {
  const World w = generate_world(identity_world(5));
  const SamplingIndexes idx = build_sampling_indexes(w);
  SamplingConfig cfg;
  cfg.k_c = 0;
  cfg.k_g = 3;
  cfg.n_random = 0;
  cfg.seed = 9;
  const auto& b = w.bg(w.train_bg_ids[1]);
  const auto pool = build_candidate_pool(w, b, cfg, idx.bg_index, idx.fg_index);
  REQUIRE(pool.size() == 3);

  // Brute-force cosine scan over normalized raw features, self excluded.
  const Vec q = l2_normalize(w.fg(b.original_object_id).feature);
  std::vector<std::pair<double, ObjectId>> scored;
  for (const auto& f : w.foregrounds) {
    if (f.id == b.original_object_id) continue;
    scored.emplace_back(cosine(q, l2_normalize(f.feature)), f.id);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b2) {
    if (a.first != b2.first) return a.first > b2.first;
    return a.second < b2.second;
  });
  for (int i = 0; i < 3; ++i) {
    CHECK(pool[std::size_t(i)] == scored[std::size_t(i)].second);
    CHECK(w.fg(pool[std::size_t(i)]).category == w.fg(b.original_object_id).category);
  }
}

TEST_CASE("pool entries are unique even when heuristics overlap") {
  const World w = generate_world(small_world(11));
  const SamplingIndexes idx = build_sampling_indexes(w);
  SamplingConfig cfg;
  cfg.k_c = 10;
  cfg.k_g = 30;
  cfg.n_random = 50;
  cfg.seed = 13;
  for (int i = 0; i < 10; ++i) {
    const auto pool =
        build_candidate_pool(w, w.bg(w.train_bg_ids[std::size_t(i)]), cfg, idx.bg_index,
                             idx.fg_index);
    const std::set<ObjectId> unique(pool.begin(), pool.end());
    CHECK(unique.size() == pool.size());
  }
}

TEST_CASE("mine_triplets: one confident positive and one confident negative") {
  // id 0 = original (log aspect 0, score 0.5); id 1 scores ~1; id 2 scores ~0.
  const World w = toy_world({1.0, std::exp(1.0), std::exp(-1.0)});
  const Discriminator d = aspect_probe_disc(2, 2);
  SamplingConfig cfg;
  cfg.seed = 15;
  const std::vector<ObjectId> pool = {1, 2};
  const auto triplets = mine_triplets(w, w.bg(0), pool, d, cfg);
  REQUIRE(triplets.size() == 2);  // 2 positives x 1 negative
  CHECK(triplets[0].positive_id == 0);
  CHECK(triplets[0].provenance == Triplet::Provenance::original);
  CHECK(triplets[0].pos_score == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(triplets[0].negative_id == 2);
  CHECK(triplets[1].positive_id == 1);
  CHECK(triplets[1].provenance == Triplet::Provenance::mined);
  CHECK(triplets[1].pos_score > 0.8);
  CHECK(triplets[1].neg_score < 0.3);
}

TEST_CASE("mine_triplets: all-uncertain pool raises NoNegatives") {
  const World w = toy_world({1.0, 1.01, 0.99});  // scores all near 0.5
  const Discriminator d = aspect_probe_disc(2, 2);
  SamplingConfig cfg;
  cfg.seed = 17;
  const std::vector<ObjectId> pool = {1, 2};
  CHECK_THROWS_AS(mine_triplets(w, w.bg(0), pool, d, cfg), NoNegativesError);
}

TEST_CASE("mine_triplets caps the cross product deterministically") {
  std::vector<double> aspects = {1.0};
  for (int i = 0; i < 10; ++i) aspects.push_back(std::exp(1.0));   // positives
  for (int i = 0; i < 10; ++i) aspects.push_back(std::exp(-1.0));  // negatives
  const World w = toy_world(aspects);
  const Discriminator d = aspect_probe_disc(2, 2);
  SamplingConfig cfg;
  cfg.seed = 19;
  cfg.max_triplets_per_bg = 16;
  std::vector<ObjectId> pool;
  for (ObjectId id = 1; id < ObjectId(aspects.size()); ++id) pool.push_back(id);
  const auto a = mine_triplets(w, w.bg(0), pool, d, cfg);
  const auto b = mine_triplets(w, w.bg(0), pool, d, cfg);
  CHECK(a.size() == 16);  // 11 positives x 10 negatives, capped
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].positive_id == b[i].positive_id);
    CHECK(a[i].negative_id == b[i].negative_id);
  }
  for (const auto& t : a) CHECK(t.positive_id != t.negative_id);
}

TEST_CASE("generate_triplets: emitted invariants hold and runs are identical") {
  const World w = generate_world(small_world(21));
  Discriminator d = Discriminator::make(32, 32, 16, 8, 23);
  DiscTrainConfig dcfg;
  dcfg.lr = 1e-3;
  dcfg.epochs = 20;
  dcfg.seed = 25;
  train_discriminator(d, w, w.train_bg_ids, dcfg);

  SamplingConfig cfg;
  cfg.seed = 27;
  TripletGenSummary summary;
  const auto triplets = generate_triplets(w, d, cfg, &summary);
  CHECK(summary.backgrounds_processed == w.train_bg_ids.size());
  CHECK(!triplets.empty());
  for (const auto& t : triplets) {
    CHECK(t.positive_id != t.negative_id);
    CHECK(t.neg_score < cfg.t_low);
    if (t.provenance == Triplet::Provenance::mined) CHECK(t.pos_score > cfg.t_high);
  }
  // Ordered by background, then emission index.
  for (std::size_t i = 1; i < triplets.size(); ++i) {
    CHECK(triplets[i - 1].background_id <= triplets[i].background_id);
  }

  const auto again = generate_triplets(w, d, cfg);
  REQUIRE(again.size() == triplets.size());
  for (std::size_t i = 0; i < triplets.size(); ++i) {
    CHECK(again[i].positive_id == triplets[i].positive_id);
    CHECK(again[i].negative_id == triplets[i].negative_id);
    CHECK(again[i].pos_score == triplets[i].pos_score);
  }
}

TEST_CASE("a healthy share of mined positives is oracle-compatible") {
  const World w = generate_world(small_world(31));
  Discriminator d = Discriminator::make(32, 32, 16, 8, 33);
  DiscTrainConfig dcfg;
  dcfg.lr = 1e-3;
  dcfg.epochs = 25;
  dcfg.seed = 35;
  train_discriminator(d, w, w.train_bg_ids, dcfg);

  SamplingConfig cfg;
  cfg.seed = 37;
  const auto triplets = generate_triplets(w, d, cfg);
  int mined = 0, mined_good = 0;
  std::set<std::pair<ObjectId, ObjectId>> seen;
  for (const auto& t : triplets) {
    if (t.provenance != Triplet::Provenance::mined) continue;
    if (!seen.insert({t.background_id, t.positive_id}).second) continue;
    ++mined;
    if (w.oracle_label(w.bg(t.background_id), w.fg(t.positive_id))) ++mined_good;
  }
  REQUIRE(mined > 0);  // discriminator does find extra positives
  CHECK(double(mined_good) / double(mined) >= 0.3);
}

TEST_CASE("triplet file round-trip") {
  const auto dir = (std::filesystem::temp_directory_path() / "ufo_triplets_rt").string();
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  std::vector<Triplet> triplets;
  Triplet t;
  t.background_id = 3;
  t.positive_id = 8;
  t.negative_id = 11;
  t.pos_score = 0.91234567890123456;
  t.neg_score = 0.0123456789;
  t.provenance = Triplet::Provenance::mined;
  triplets.push_back(t);
  t.provenance = Triplet::Provenance::original;
  t.positive_id = 2;
  triplets.push_back(t);
  write_triplets(dir + "/t.txt", triplets, "{}");
  const auto back = read_triplets(dir + "/t.txt");
  REQUIRE(back.size() == 2);
  CHECK(back[0].pos_score == triplets[0].pos_score);  // %.17g round-trip
  CHECK(back[0].provenance == Triplet::Provenance::mined);
  CHECK(back[1].provenance == Triplet::Provenance::original);
  CHECK(back[1].positive_id == 2);
}

TEST_CASE("speedup: heuristics help in an identity-table world") {
  const World w = generate_world(identity_world(41));
  Discriminator d = Discriminator::make(32, 32, 16, 8, 43);
  DiscTrainConfig dcfg;
  dcfg.lr = 1e-3;
  dcfg.epochs = 20;
  dcfg.seed = 45;
  train_discriminator(d, w, w.train_bg_ids, dcfg);

  SamplingConfig cfg;
  cfg.seed = 47;
  cfg.k_g = 40;
  cfg.max_probe = 400;
  const SpeedupReport rep = measure_sampling_speedup(w, d, cfg, 80);
  CHECK(rep.n_backgrounds == 80);
  CHECK(rep.avg_probes_heuristic <= rep.avg_probes_random);
}

TEST_CASE("speedup: max_probe 1 censors instead of crashing") {
  const World w = toy_world({1.0, 1.01, 0.99});
  const Discriminator d = aspect_probe_disc(2, 2);
  SamplingConfig cfg;
  cfg.seed = 49;
  cfg.k_c = 0;
  cfg.k_g = 1;
  cfg.n_random = 1;
  cfg.max_probe = 1;
  const SpeedupReport rep = measure_sampling_speedup(w, d, cfg, 1);
  CHECK(rep.avg_probes_heuristic == 1.0);
  CHECK(rep.censored_heuristic == 1);
  CHECK(rep.censored_random == 1);
}

TEST_CASE("speedup: with heuristics disabled both arms follow the same law") {
  const World w = generate_world(small_world(51));
  Discriminator d = Discriminator::make(32, 32, 16, 8, 53);
  DiscTrainConfig dcfg;
  dcfg.lr = 1e-3;
  dcfg.epochs = 15;
  dcfg.seed = 55;
  train_discriminator(d, w, w.train_bg_ids, dcfg);

  SamplingConfig cfg;
  cfg.seed = 57;
  cfg.k_c = 0;
  cfg.k_g = 0;
  cfg.n_random = 32;
  cfg.max_probe = 300;
  const SpeedupReport rep = measure_sampling_speedup(w, d, cfg, 120);
  const double ratio = rep.avg_probes_heuristic / rep.avg_probes_random;
  CHECK(ratio > 0.5);
  CHECK(ratio < 2.0);
}

TEST_SUITE_END();

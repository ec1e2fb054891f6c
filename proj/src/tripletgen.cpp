#include "ufo/tripletgen.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "ufo/io.hpp"

namespace ufo {

void SamplingConfig::validate() const {
  if (k_c < 0 || k_g < 0 || n_random < 0) {
    throw ValidationError("sampling config: negative pool sizes");
  }
  if (k_c == 0 && k_g == 0 && n_random == 0) {
    throw ValidationError("sampling config: all pool sources are zero");
  }
  if (!(t_low >= 0.0 && t_low < t_high && t_high <= 1.0)) {
    throw BadThresholdsError("sampling config: need 0 <= t_low < t_high <= 1");
  }
  if (max_probe <= 0 || max_triplets_per_bg <= 0) {
    throw ValidationError("sampling config: max_probe and max_triplets_per_bg must be positive");
  }
}

SamplingIndexes build_sampling_indexes(const World& world) {
  IndexParams params;
  params.kind = IndexKind::exact;

  Mat fg_rows(Index(world.foregrounds.size()), world.cfg.feature_dim);
  std::vector<ObjectId> fg_ids(world.foregrounds.size());
  for (const auto& f : world.foregrounds) {
    fg_rows.row(Index(f.id)) = l2_normalize(f.feature).transpose();
    fg_ids[std::size_t(f.id)] = f.id;
  }

  Mat bg_rows(Index(world.train_bg_ids.size()), world.cfg.context_dim);
  std::vector<ObjectId> bg_ids = world.train_bg_ids;
  for (std::size_t i = 0; i < bg_ids.size(); ++i) {
    bg_rows.row(Index(i)) = l2_normalize(world.bg(bg_ids[i]).context_feature).transpose();
  }

  return SamplingIndexes{VectorIndex::build(bg_rows, bg_ids, params),
                         VectorIndex::build(fg_rows, fg_ids, params)};
}

std::vector<ObjectId> build_candidate_pool(const World& world, const BackgroundQuery& b,
                                           const SamplingConfig& cfg,
                                           const VectorIndex& bg_index,
                                           const VectorIndex& fg_index) {
  cfg.validate();
  const ObjectId original = b.original_object_id;
  std::vector<ObjectId> pool;
  std::unordered_set<ObjectId> seen;
  auto push = [&](ObjectId id) {
    if (seen.insert(id).second) pool.push_back(id);
  };

  if (cfg.k_g > 0) {
    const Vec q = l2_normalize(world.fg(original).feature);
    const RankedList nn = fg_index.query(q, cfg.k_g + 1);
    int taken = 0;
    for (const auto& [id, score] : nn.entries) {
      if (id == original) continue;  // self-neighbor
      push(id);
      if (++taken >= cfg.k_g) break;
    }
  }
  if (cfg.k_c > 0) {
    const Vec q = l2_normalize(b.context_feature);
    const RankedList nn = bg_index.query(q, cfg.k_c + 1);
    int taken = 0;
    for (const auto& [id, score] : nn.entries) {
      if (id == b.id) continue;
      push(world.bg(id).original_object_id);
      if (++taken >= cfg.k_c) break;
    }
  }
  if (cfg.n_random > 0) {
    Rng rng(seed_fold(seed_fold(cfg.seed, "pool-random"), b.id));
    for (int i = 0; i < cfg.n_random; ++i) {
      push(rng.below(std::uint64_t(world.foregrounds.size())));
    }
  }
  if (pool.empty()) throw EmptyPoolError("candidate pool empty for background " +
                                         std::to_string(b.id));
  return pool;
}

std::vector<Triplet> mine_triplets(const World& world, const BackgroundQuery& b,
                                   std::span<const ObjectId> pool, const Discriminator& d,
                                   const SamplingConfig& cfg) {
  cfg.validate();
  const ObjectId original = b.original_object_id;

  // One batched scoring pass covers the original and the pool.
  std::vector<ObjectId> to_score;
  to_score.reserve(pool.size() + 1);
  to_score.push_back(original);
  for (ObjectId id : pool) to_score.push_back(id);
  const Vec scores = disc_scores(d, b, world, to_score);

  struct Candidate {
    ObjectId id;
    double score;
  };
  std::vector<Candidate> positives{{original, scores[0]}};
  std::vector<Candidate> negatives;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (pool[i] == original) continue;  // already the known positive
    const double s = scores[Index(i + 1)];
    if (s > cfg.t_high) {
      positives.push_back({pool[i], s});
    } else if (s < cfg.t_low) {
      negatives.push_back({pool[i], s});
    }
  }
  if (negatives.empty()) {
    throw NoNegativesError("background " + std::to_string(b.id) +
                           ": no pool member below t_low");
  }

  // Emission under the cap keeps the known-good original prominent: pairs
  // with the original positive fill up to half the cap, mined-positive pairs
  // fill the rest, both seed-sampled from their slice of the cross product.
  const std::size_t cap = std::size_t(cfg.max_triplets_per_bg);
  Rng rng(seed_fold(seed_fold(cfg.seed, "cap"), b.id));
  auto sample_pairs = [&](std::size_t pos_begin, std::size_t pos_end, std::size_t want) {
    const std::size_t total = (pos_end - pos_begin) * negatives.size();
    std::vector<std::size_t> picks(total);
    std::iota(picks.begin(), picks.end(), pos_begin * negatives.size());
    if (total > want) {
      for (std::size_t i = 0; i < want; ++i) {
        std::swap(picks[i], picks[i + rng.below(picks.size() - i)]);
      }
      picks.resize(want);
      std::sort(picks.begin(), picks.end());  // keep positive-major emission order
    }
    return picks;
  };

  const std::size_t original_want =
      positives.size() == 1 ? cap : std::max<std::size_t>(1, cap / 2);
  std::vector<std::size_t> picks = sample_pairs(0, 1, original_want);
  if (positives.size() > 1 && picks.size() < cap) {
    const auto mined = sample_pairs(1, positives.size(), cap - picks.size());
    picks.insert(picks.end(), mined.begin(), mined.end());
  }

  std::vector<Triplet> out;
  out.reserve(picks.size());
  for (std::size_t pick : picks) {
    const Candidate& pos = positives[pick / negatives.size()];
    const Candidate& neg = negatives[pick % negatives.size()];
    Triplet t;
    t.background_id = b.id;
    t.positive_id = pos.id;
    t.negative_id = neg.id;
    t.pos_score = pos.score;
    t.neg_score = neg.score;
    t.provenance = pos.id == original ? Triplet::Provenance::original
                                      : Triplet::Provenance::mined;
    out.push_back(t);
  }
  return out;
}

std::vector<Triplet> generate_triplets(const World& world, const Discriminator& d,
                                       const SamplingConfig& cfg,
                                       TripletGenSummary* summary) {
  cfg.validate();
  const SamplingIndexes indexes = build_sampling_indexes(world);
  TripletGenSummary local;
  std::vector<Triplet> out;
  for (ObjectId bid : world.train_bg_ids) {
    const auto& b = world.bg(bid);
    const auto pool = build_candidate_pool(world, b, cfg, indexes.bg_index, indexes.fg_index);
    try {
      auto mined = mine_triplets(world, b, pool, d, cfg);
      for (const auto& t : mined) {
        (t.provenance == Triplet::Provenance::original ? local.original_triplets
                                                       : local.mined_triplets)++;
      }
      out.insert(out.end(), mined.begin(), mined.end());
    } catch (const NoNegativesError&) {
      local.backgrounds_skipped++;
    }
    local.backgrounds_processed++;
  }
  if (summary) *summary = local;
  return out;
}

namespace {

// Probes candidates in `order` until one scores above t_high; scores are
// computed in blocks so the count matches one-at-a-time probing.
int probes_to_first_positive(const World& world, const Discriminator& d,
                             const BackgroundQuery& b, std::span<const ObjectId> order,
                             double t_high, int max_probe, bool& censored) {
  constexpr std::size_t kBlock = 64;
  int probes = 0;
  for (std::size_t start = 0; start < order.size(); start += kBlock) {
    const std::size_t len = std::min(kBlock, order.size() - start);
    const Vec scores = disc_scores(d, b, world, order.subspan(start, len));
    for (std::size_t i = 0; i < len; ++i) {
      ++probes;
      if (scores[Index(i)] > t_high) {
        censored = false;
        return probes;
      }
      if (probes >= max_probe) {
        censored = true;
        return max_probe;
      }
    }
  }
  censored = true;
  return max_probe;
}

}  // namespace

SpeedupReport measure_sampling_speedup(const World& world, const Discriminator& d,
                                       const SamplingConfig& cfg, int n_backgrounds) {
  cfg.validate();
  const SamplingIndexes indexes = build_sampling_indexes(world);

  std::vector<ObjectId> sample = world.train_bg_ids;
  Rng pick_rng(seed_fold(cfg.seed, "speedup-sample"));
  pick_rng.shuffle(sample);
  if (int(sample.size()) > n_backgrounds) sample.resize(std::size_t(n_backgrounds));

  SpeedupReport rep;
  rep.n_backgrounds = int(sample.size());
  double heuristic_sum = 0.0, random_sum = 0.0;
  for (ObjectId bid : sample) {
    const auto& b = world.bg(bid);
    const ObjectId original = b.original_object_id;

    // Heuristic order: the candidate pool first, then uniform picks over the
    // rest of the catalog. Both arms thus have max_probe candidates and are
    // censored identically; the heuristics only change who is probed early.
    std::vector<ObjectId> heuristic_order;
    std::unordered_set<ObjectId> in_pool{original};
    for (ObjectId id :
         build_candidate_pool(world, b, cfg, indexes.bg_index, indexes.fg_index)) {
      if (in_pool.insert(id).second) heuristic_order.push_back(id);
    }
    {
      std::vector<ObjectId> rest;
      rest.reserve(world.foregrounds.size());
      for (ObjectId id = 0; id < world.foregrounds.size(); ++id) {
        if (!in_pool.count(id)) rest.push_back(id);
      }
      Rng tail_rng(seed_fold(seed_fold(cfg.seed, "speedup-tail"), bid));
      tail_rng.shuffle(rest);
      heuristic_order.insert(heuristic_order.end(), rest.begin(), rest.end());
    }

    std::vector<ObjectId> random_order(world.foregrounds.size());
    std::iota(random_order.begin(), random_order.end(), 0);
    Rng order_rng(seed_fold(seed_fold(cfg.seed, "speedup-random"), bid));
    order_rng.shuffle(random_order);
    std::erase(random_order, original);

    bool censored = false;
    heuristic_sum += probes_to_first_positive(world, d, b, heuristic_order, cfg.t_high,
                                              cfg.max_probe, censored);
    rep.censored_heuristic += censored ? 1 : 0;
    random_sum += probes_to_first_positive(world, d, b, random_order, cfg.t_high,
                                           cfg.max_probe, censored);
    rep.censored_random += censored ? 1 : 0;
  }
  if (!sample.empty()) {
    rep.avg_probes_heuristic = heuristic_sum / double(sample.size());
    rep.avg_probes_random = random_sum / double(sample.size());
  }
  return rep;
}

void write_triplets(const std::string& path, std::span<const Triplet> triplets,
                    const std::string& config_line) {
  std::ostringstream out;
  out << "# config " << config_line << "\n";
  for (const auto& t : triplets) {
    out << "bg:" << t.background_id << " pos:" << t.positive_id
        << " neg:" << t.negative_id << " pos_score:" << format_double(t.pos_score)
        << " neg_score:" << format_double(t.neg_score) << " provenance:"
        << (t.provenance == Triplet::Provenance::original ? "original" : "mined") << "\n";
  }
  write_text_file(path, out.str());
}

std::vector<Triplet> read_triplets(const std::string& path) {
  std::vector<Triplet> out;
  for (const auto& line : read_lines(path)) {
    std::istringstream ss(line);
    std::string tok;
    Triplet t;
    while (ss >> tok) {
      const auto colon = tok.find(':');
      if (colon == std::string::npos) throw IoError("bad triplet field: " + tok);
      const std::string key = tok.substr(0, colon);
      const std::string value = tok.substr(colon + 1);
      if (key == "bg") t.background_id = std::stoull(value);
      else if (key == "pos") t.positive_id = std::stoull(value);
      else if (key == "neg") t.negative_id = std::stoull(value);
      else if (key == "pos_score") t.pos_score = parse_double(value);
      else if (key == "neg_score") t.neg_score = parse_double(value);
      else if (key == "provenance")
        t.provenance = value == "original" ? Triplet::Provenance::original
                                           : Triplet::Provenance::mined;
      else throw IoError("unknown triplet field: " + key);
    }
    if (t.positive_id == t.negative_id) {
      throw IoError("triplet with positive == negative in " + path);
    }
    out.push_back(t);
  }
  return out;
}

}  // namespace ufo

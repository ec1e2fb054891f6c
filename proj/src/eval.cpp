#include "ufo/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace ufo {

double average_precision(const RankedList& ranking,
                         const std::unordered_set<ObjectId>& relevant,
                         std::size_t cutoff) {
  if (relevant.empty()) throw EmptyRelevantSetError("average_precision: empty relevant set");
  const std::size_t depth = std::min(cutoff, ranking.entries.size());
  std::size_t hits = 0;
  double sum = 0.0;
  for (std::size_t rank = 0; rank < depth; ++rank) {
    if (relevant.count(ranking.entries[rank].first)) {
      ++hits;
      sum += double(hits) / double(rank + 1);
    }
  }
  if (hits == 0) return 0.0;
  const double denom = double(std::min<std::size_t>(relevant.size(), cutoff));
  return sum / denom;
}

MeanApResult mean_ap(const std::vector<RankedList>& rankings, const World& world,
                     std::size_t cutoff) {
  std::map<int, std::vector<double>> per_category;
  for (const auto& ranking : rankings) {
    const auto& b = world.bg(ranking.query_id);
    if (b.oracle_compatible_ids.empty()) {
      throw EmptyRelevantSetError("mean_ap: query " + std::to_string(b.id) +
                                  " has no oracle set");
    }
    const std::unordered_set<ObjectId> relevant(b.oracle_compatible_ids.begin(),
                                                b.oracle_compatible_ids.end());
    const int category = world.fg(b.original_object_id).category;
    per_category[category].push_back(average_precision(ranking, relevant, cutoff));
  }
  MeanApResult result;
  double total = 0.0;
  for (const auto& [category, aps] : per_category) {
    const double m = std::accumulate(aps.begin(), aps.end(), 0.0) / double(aps.size());
    result.per_category[category] = m;
    total += m;
  }
  result.overall = per_category.empty() ? 0.0 : total / double(per_category.size());
  return result;
}

double precision_at_k(const RankedList& ranking, const World& world,
                      const BackgroundQuery& b, int k) {
  if (k <= 0) throw ValidationError("precision_at_k: k must be positive");
  if (ranking.entries.size() < std::size_t(k)) {
    throw ShortRankingError("precision_at_k: ranking of " +
                            std::to_string(ranking.entries.size()) + " entries, k=" +
                            std::to_string(k));
  }
  int compatible = 0;
  for (int i = 0; i < k; ++i) {
    if (world.oracle_label(b, world.fg(ranking.entries[std::size_t(i)].first))) ++compatible;
  }
  return double(compatible) / double(k);
}

int diversity_top25(const RankedList& ranking, const World& world,
                    const BackgroundQuery& b) {
  constexpr int kTop = 25;
  if (ranking.entries.size() < kTop) {
    throw ShortRankingError("diversity_top25: ranking of " +
                            std::to_string(ranking.entries.size()) + " entries");
  }
  std::unordered_set<int> categories;
  for (int i = 0; i < kTop; ++i) {
    const auto& f = world.fg(ranking.entries[std::size_t(i)].first);
    if (world.oracle_label(b, f)) categories.insert(f.category);
  }
  return int(categories.size());
}

RankedList shape_baseline_rank(const BackgroundQuery& b,
                               const std::vector<ForegroundObject>& catalog) {
  RankedList out;
  out.query_id = b.id;
  out.entries.reserve(catalog.size());
  const double log_hole = std::log(b.hole_aspect_ratio);
  for (const auto& f : catalog) {
    out.entries.emplace_back(f.id, -std::abs(std::log(f.aspect_ratio) - log_hole));
  }
  std::sort(out.entries.begin(), out.entries.end(), ranked_before);
  return out;
}

RankedList discriminator_only_rank(const Discriminator& d, const World& world,
                                   const BackgroundQuery& b, double* wall_ms) {
  using Clock = std::chrono::steady_clock;
  const auto t0 = Clock::now();
  std::vector<ObjectId> ids(world.foregrounds.size());
  std::iota(ids.begin(), ids.end(), 0);
  const Vec scores = disc_scores(d, b, world, ids);
  RankedList out;
  out.query_id = b.id;
  out.entries.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) out.entries.emplace_back(ids[i], scores[Index(i)]);
  std::sort(out.entries.begin(), out.entries.end(), ranked_before);
  if (wall_ms) {
    *wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
  }
  return out;
}

EvalMode eval_mode_from_string(const std::string& s) {
  if (s == "ufo") return EvalMode::ufo;
  if (s == "no_discriminator") return EvalMode::no_discriminator;
  if (s == "regression") return EvalMode::regression;
  if (s == "no_bg_training") return EvalMode::no_bg_training;
  if (s == "discriminator_only") return EvalMode::discriminator_only;
  if (s == "shape") return EvalMode::shape;
  throw ValidationError("unknown eval mode: " + s);
}

std::string to_string(EvalMode mode) {
  switch (mode) {
    case EvalMode::ufo: return "ufo";
    case EvalMode::no_discriminator: return "no_discriminator";
    case EvalMode::regression: return "regression";
    case EvalMode::no_bg_training: return "no_bg_training";
    case EvalMode::discriminator_only: return "discriminator_only";
    case EvalMode::shape: return "shape";
  }
  return "?";
}

ModeMetrics evaluate_rankings(EvalMode mode, const std::vector<RankedList>& rankings,
                              const World& world, const EvalParams& params) {
  ModeMetrics m;
  m.mode = mode;
  const MeanApResult ap = mean_ap(rankings, world, std::size_t(params.map_cutoff));
  m.per_category_map = ap.per_category;
  m.overall_map = ap.overall;
  if (params.map_all) {
    m.overall_map_all = mean_ap(rankings, world, kNoCutoff).overall;
  }

  std::vector<double> diversity;
  std::map<int, double> p_sums;
  for (const auto& ranking : rankings) {
    const auto& b = world.bg(ranking.query_id);
    for (int k : params.ks) p_sums[k] += precision_at_k(ranking, world, b, k);
    diversity.push_back(double(diversity_top25(ranking, world, b)));
  }
  const double n = double(std::max<std::size_t>(1, rankings.size()));
  for (auto& [k, sum] : p_sums) m.p_at_k[k] = sum / n;
  const double dmean =
      std::accumulate(diversity.begin(), diversity.end(), 0.0) / n;
  double var = 0.0;
  for (double d : diversity) var += (d - dmean) * (d - dmean);
  m.diversity_mean = dmean;
  m.diversity_std = std::sqrt(var / n);
  return m;
}

std::vector<RankedList> rank_eval_queries(const BackgroundEncoder& encoder,
                                          const World& world, const VectorIndex& index,
                                          int depth, double* mean_us, double* p99_us) {
  using Clock = std::chrono::steady_clock;
  std::vector<RankedList> out;
  std::vector<double> us;
  out.reserve(world.eval_bg_ids.size());
  for (ObjectId bid : world.eval_bg_ids) {
    const auto& b = world.bg(bid);
    const auto t0 = Clock::now();
    const Vec e = embed_background(encoder, b);
    RankedList r = index.query(e, depth);
    us.push_back(std::chrono::duration<double, std::micro>(Clock::now() - t0).count());
    r.query_id = bid;
    out.push_back(std::move(r));
  }
  if (mean_us) {
    *mean_us = us.empty() ? 0.0
                          : std::accumulate(us.begin(), us.end(), 0.0) / double(us.size());
  }
  if (p99_us) {
    if (us.empty()) {
      *p99_us = 0.0;
    } else {
      std::sort(us.begin(), us.end());
      *p99_us = us[std::size_t(std::ceil(0.99 * double(us.size()))) - 1];
    }
  }
  return out;
}

std::vector<ModeMetrics> run_ablation_matrix(const World& world,
                                             const std::vector<EvalMode>& modes,
                                             const AblationConfig& cfg) {
  const ForegroundEncoder fg_encoder =
      ForegroundEncoder::make(world.cfg.feature_dim, cfg.enc_hidden, cfg.embed_dim,
                              seed_fold(cfg.seed, "fg-encoder"));
  const BackgroundEncoder bg_init =
      BackgroundEncoder::make(world.cfg.context_dim, cfg.enc_hidden, cfg.embed_dim,
                              seed_fold(cfg.seed, "bg-encoder"));

  const Mat catalog = embed_foreground_catalog(fg_encoder, world.foregrounds);
  std::vector<ObjectId> catalog_ids(world.foregrounds.size());
  std::iota(catalog_ids.begin(), catalog_ids.end(), 0);
  IndexParams exact_params;
  exact_params.kind = IndexKind::exact;
  const VectorIndex index = VectorIndex::build(catalog, catalog_ids, exact_params);

  const bool needs_disc =
      std::any_of(modes.begin(), modes.end(), [](EvalMode m) {
        return m == EvalMode::ufo || m == EvalMode::discriminator_only;
      });
  Discriminator disc = Discriminator::make(world.cfg.context_dim, world.cfg.feature_dim,
                                           cfg.disc_h1, cfg.disc_h2,
                                           seed_fold(cfg.seed, "disc"));
  if (needs_disc) {
    DiscTrainConfig dcfg = cfg.disc;
    if (dcfg.seed == 0) dcfg.seed = seed_fold(cfg.seed, "disc-train");
    train_discriminator(disc, world, world.train_bg_ids, dcfg);
  }

  SamplingConfig scfg = cfg.sampling;
  if (scfg.seed == 0) scfg.seed = seed_fold(cfg.seed, "triplets");
  std::vector<Triplet> triplets;
  if (std::find(modes.begin(), modes.end(), EvalMode::ufo) != modes.end() &&
      cfg.train.remine_every <= 0) {
    triplets = generate_triplets(world, disc, scfg);
  }

  int depth = 25;
  depth = std::max(depth, cfg.eval.map_cutoff);
  for (int k : cfg.eval.ks) depth = std::max(depth, k);
  if (cfg.eval.map_all) depth = int(world.foregrounds.size());
  depth = std::min<int>(depth, int(world.foregrounds.size()));

  std::vector<ModeMetrics> out;
  for (EvalMode mode : modes) {
    std::vector<RankedList> rankings;
    double mean_us = 0.0, p99_us = 0.0;
    switch (mode) {
      case EvalMode::ufo:
      case EvalMode::no_discriminator:
      case EvalMode::regression:
      case EvalMode::no_bg_training: {
        TrainConfig tcfg = cfg.train;
        tcfg.mode = mode == EvalMode::ufo              ? TrainMode::ufo
                    : mode == EvalMode::no_discriminator ? TrainMode::no_discriminator
                    : mode == EvalMode::regression        ? TrainMode::regression
                                                          : TrainMode::no_bg_training;
        if (tcfg.seed == 0) tcfg.seed = seed_fold(cfg.seed, "train-encoder");
        TrainResult trained;
        if (tcfg.mode == TrainMode::ufo && tcfg.remine_every > 0) {
          const TripletSource source = [&](int segment) {
            SamplingConfig salted = scfg;
            salted.seed = seed_fold(scfg.seed, std::uint64_t(segment));
            return generate_triplets(world, disc, salted);
          };
          trained = train_encoder(world, fg_encoder, bg_init, source, tcfg);
        } else {
          trained = train_encoder(world, fg_encoder, bg_init, triplets, tcfg);
        }
        rankings = rank_eval_queries(trained.encoder, world, index, depth, &mean_us, &p99_us);
        break;
      }
      case EvalMode::discriminator_only: {
        std::vector<double> ms;
        for (ObjectId bid : world.eval_bg_ids) {
          double wall = 0.0;
          rankings.push_back(discriminator_only_rank(disc, world, world.bg(bid), &wall));
          ms.push_back(wall * 1000.0);
        }
        if (!ms.empty()) {
          mean_us = std::accumulate(ms.begin(), ms.end(), 0.0) / double(ms.size());
          std::vector<double> sorted = ms;
          std::sort(sorted.begin(), sorted.end());
          p99_us = sorted[std::size_t(std::ceil(0.99 * double(sorted.size()))) - 1];
        }
        break;
      }
      case EvalMode::shape: {
        using Clock = std::chrono::steady_clock;
        std::vector<double> us;
        for (ObjectId bid : world.eval_bg_ids) {
          const auto t0 = Clock::now();
          rankings.push_back(shape_baseline_rank(world.bg(bid), world.foregrounds));
          us.push_back(std::chrono::duration<double, std::micro>(Clock::now() - t0).count());
        }
        if (!us.empty()) {
          mean_us = std::accumulate(us.begin(), us.end(), 0.0) / double(us.size());
          std::vector<double> sorted = us;
          std::sort(sorted.begin(), sorted.end());
          p99_us = sorted[std::size_t(std::ceil(0.99 * double(sorted.size()))) - 1];
        }
        break;
      }
    }
    ModeMetrics m = evaluate_rankings(mode, rankings, world, cfg.eval);
    m.mean_query_us = mean_us;
    m.p99_query_us = p99_us;
    out.push_back(std::move(m));
  }
  return out;
}

std::string metrics_table(const std::vector<ModeMetrics>& metrics, int n_categories) {
  std::ostringstream out;
  char buf[64];
  out << "mAP@cutoff (%), per category and overall\n";
  std::snprintf(buf, sizeof(buf), "%-20s", "method");
  out << buf;
  for (int c = 0; c < n_categories; ++c) {
    std::snprintf(buf, sizeof(buf), " %7s", ("cat" + std::to_string(c)).c_str());
    out << buf;
  }
  out << " | overall";
  out << "\n";
  for (const auto& m : metrics) {
    std::snprintf(buf, sizeof(buf), "%-20s", to_string(m.mode).c_str());
    out << buf;
    for (int c = 0; c < n_categories; ++c) {
      const auto it = m.per_category_map.find(c);
      if (it == m.per_category_map.end()) {
        std::snprintf(buf, sizeof(buf), " %7s", "-");
      } else {
        std::snprintf(buf, sizeof(buf), " %7.2f", 100.0 * it->second);
      }
      out << buf;
    }
    std::snprintf(buf, sizeof(buf), " | %7.2f", 100.0 * m.overall_map);
    out << buf << "\n";
  }

  out << "\nPrecision@K (%)\n";
  if (!metrics.empty()) {
    std::snprintf(buf, sizeof(buf), "%-20s", "method");
    out << buf;
    for (const auto& [k, v] : metrics.front().p_at_k) {
      std::snprintf(buf, sizeof(buf), " %7s", ("P@" + std::to_string(k)).c_str());
      out << buf;
    }
    out << "\n";
    for (const auto& m : metrics) {
      std::snprintf(buf, sizeof(buf), "%-20s", to_string(m.mode).c_str());
      out << buf;
      for (const auto& [k, v] : m.p_at_k) {
        std::snprintf(buf, sizeof(buf), " %7.2f", 100.0 * v);
        out << buf;
      }
      out << "\n";
    }
  }

  out << "\nDiversity in top 25 (mean +- std), and all-retrieval mAP (%)\n";
  for (const auto& m : metrics) {
    std::snprintf(buf, sizeof(buf), "%-20s %5.2f +- %4.2f", to_string(m.mode).c_str(),
                  m.diversity_mean, m.diversity_std);
    out << buf;
    if (m.overall_map_all) {
      std::snprintf(buf, sizeof(buf), "   mAP@all %7.2f", 100.0 * *m.overall_map_all);
      out << buf;
    }
    out << "\n";
  }
  return out.str();
}

std::string metrics_records(const std::vector<ModeMetrics>& metrics) {
  std::ostringstream out;
  for (const auto& m : metrics) {
    const std::string mode = to_string(m.mode);
    for (const auto& [category, v] : m.per_category_map) {
      out << "mode:" << mode << " metric:map category:" << category
          << " value:" << format_double(v) << "\n";
    }
    out << "mode:" << mode << " metric:map_overall value:" << format_double(m.overall_map)
        << "\n";
    if (m.overall_map_all) {
      out << "mode:" << mode
          << " metric:map_overall_all value:" << format_double(*m.overall_map_all) << "\n";
    }
    for (const auto& [k, v] : m.p_at_k) {
      out << "mode:" << mode << " metric:p_at_k k:" << k << " value:" << format_double(v)
          << "\n";
    }
    out << "mode:" << mode
        << " metric:diversity_mean value:" << format_double(m.diversity_mean) << "\n";
    out << "mode:" << mode
        << " metric:diversity_std value:" << format_double(m.diversity_std) << "\n";
  }
  return out.str();
}

std::string timing_records(const std::vector<ModeMetrics>& metrics) {
  std::ostringstream out;
  for (const auto& m : metrics) {
    out << "mode:" << to_string(m.mode)
        << " mean_query_us:" << format_double(m.mean_query_us)
        << " p99_query_us:" << format_double(m.p99_query_us) << "\n";
  }
  return out.str();
}

}  // namespace ufo

#include "ufo/synthworld.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "ufo/io.hpp"

namespace ufo {

namespace {

// Generation constants. Categories carry a characteristic aspect ratio
// (pedestrians are tall, cars are wide); features embed category one-hots
// against a latent style so that category structure is present but not
// trivially separable.
constexpr int kStyleDim = 8;
constexpr int kNuisanceDim = 8;
constexpr double kCategoryGain = 2.5;
constexpr double kContextGain = 2.5;
constexpr double kAspectSigmaWithin = 0.35;  // within-category log-aspect spread
constexpr double kHoleAspectSigma = 0.30;    // hole log-aspect spread around its anchor
constexpr double kLogAspectLo = -0.92;       // ~log(0.4)
constexpr double kLogAspectHi = 0.92;        // ~log(2.5)
constexpr int kHoleRetries = 100;

double clamp_aspect(double a) { return std::clamp(a, 0.1, 10.0); }

// Fixed random linear embed of (gain * one-hot ++ latent) into `out_dim`.
Mat make_embed(Rng& rng, int out_dim, int in_dim) {
  Mat m(out_dim, in_dim);
  const double scale = 1.0 / std::sqrt(double(in_dim));
  for (int i = 0; i < out_dim; ++i) {
    for (int j = 0; j < in_dim; ++j) m(i, j) = scale * rng.normal();
  }
  return m;
}

Vec embed_with_latent(const Mat& embed, int hot, double gain, const Vec& latent,
                      double noise_sigma, Rng& rng) {
  Vec input = Vec::Zero(embed.cols());
  input[hot] = gain;
  input.tail(latent.size()) = latent;
  Vec out = embed * input;
  if (noise_sigma > 0.0) {
    for (Index i = 0; i < out.size(); ++i) out[i] += noise_sigma * rng.normal();
  }
  return out;
}

}  // namespace

bool aspect_compatible(double fg_aspect, double hole_aspect, double jitter) {
  return std::abs(std::log(fg_aspect / hole_aspect)) <= std::log1p(jitter);
}

void WorldConfig::validate() const {
  if (n_categories <= 0 || n_backgrounds <= 0 || n_foregrounds <= 0) {
    throw ValidationError("world config: counts must be positive");
  }
  if (feature_dim <= 0 || context_dim <= 0) {
    throw ValidationError("world config: dims must be positive");
  }
  if (noise_sigma < 0.0) throw ValidationError("world config: noise_sigma < 0");
  if (!(aspect_jitter > 0.0)) throw ValidationError("world config: aspect_jitter <= 0");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ValidationError("world config: train_fraction out of (0,1)");
  }
  if (compat_table.empty()) throw ValidationError("world config: empty compat table");
  std::vector<int> category_seen(std::size_t(n_categories), 0);
  for (const auto& row : compat_table) {
    if (int(row.size()) != n_categories) {
      throw ValidationError("world config: compat row width != n_categories");
    }
    const int count = std::accumulate(row.begin(), row.end(), 0);
    if (count == 0) throw ValidationError("world config: context with no compatible category");
    for (int c = 0; c < n_categories; ++c) category_seen[std::size_t(c)] += row[std::size_t(c)];
  }
  for (int c = 0; c < n_categories; ++c) {
    if (category_seen[std::size_t(c)] == 0) {
      throw ValidationError("world config: category " + std::to_string(c) +
                            " compatible with no context");
    }
  }
}

constexpr int kDefaultContextTypes = 32;

std::vector<std::vector<int>> WorldConfig::default_compat_table(int n_context_types,
                                                                int n_categories,
                                                                std::uint64_t seed) {
  Rng rng(seed_fold(seed, "compat-table"));
  std::vector<std::vector<int>> table(std::size_t(n_context_types),
                                      std::vector<int>(std::size_t(n_categories), 0));
  for (int t = 0; t < n_context_types; ++t) {
    auto& row = table[std::size_t(t)];
    row[std::size_t(t % n_categories)] = 1;  // anchor -> every category covered
    const int extras = 1 + int(rng.below(2));  // 1..2 extras -> sizes 2..3
    for (int e = 0; e < extras; ++e) {
      row[std::size_t(rng.below(std::uint64_t(n_categories)))] = 1;
    }
  }
  return table;
}

WorldConfig WorldConfig::defaults(std::uint64_t seed) {
  WorldConfig cfg;
  cfg.seed = seed;
  cfg.compat_table = default_compat_table(kDefaultContextTypes, cfg.n_categories, seed);
  return cfg;
}

const ForegroundObject& World::fg(ObjectId id) const {
  if (id >= foregrounds.size()) {
    throw WorldMismatchError("unknown foreground id " + std::to_string(id));
  }
  return foregrounds[std::size_t(id)];
}

const BackgroundQuery& World::bg(ObjectId id) const {
  if (id >= backgrounds.size()) {
    throw WorldMismatchError("unknown background id " + std::to_string(id));
  }
  return backgrounds[std::size_t(id)];
}

bool World::oracle_label(const BackgroundQuery& b, const ForegroundObject& f) const {
  if (b.id >= backgrounds.size() || f.id >= foregrounds.size() ||
      backgrounds[std::size_t(b.id)].context_type != b.context_type ||
      foregrounds[std::size_t(f.id)].category != f.category) {
    throw WorldMismatchError("oracle_label: objects not from this world");
  }
  if (!cfg.compat_table[std::size_t(b.context_type)][std::size_t(f.category)]) return false;
  return aspect_compatible(f.aspect_ratio, b.hole_aspect_ratio, cfg.aspect_jitter);
}

Mat World::foreground_features() const {
  Mat m(Index(foregrounds.size()), cfg.feature_dim);
  for (const auto& f : foregrounds) m.row(Index(f.id)) = f.feature.transpose();
  return m;
}

Mat World::background_features() const {
  Mat m(Index(backgrounds.size()), cfg.context_dim);
  for (const auto& b : backgrounds) m.row(Index(b.id)) = b.context_feature.transpose();
  return m;
}

World generate_world(const WorldConfig& cfg) {
  cfg.validate();
  World w;
  w.cfg = cfg;
  Rng rng(seed_fold(cfg.seed, "world-gen"));

  // Category aspect centers: evenly spaced in log space, shuffled so the
  // category index does not encode width order.
  std::vector<double> mu(std::size_t(cfg.n_categories));
  for (int c = 0; c < cfg.n_categories; ++c) {
    mu[std::size_t(c)] =
        cfg.n_categories == 1
            ? 0.0
            : kLogAspectLo + (kLogAspectHi - kLogAspectLo) * double(c) /
                                 double(cfg.n_categories - 1);
  }
  rng.shuffle(mu);

  const Mat fg_embed = make_embed(rng, cfg.feature_dim, cfg.n_categories + kStyleDim);
  const Mat bg_embed = make_embed(rng, cfg.context_dim, cfg.n_context_types() + kNuisanceDim);

  w.foregrounds.resize(std::size_t(cfg.n_foregrounds));
  for (int i = 0; i < cfg.n_foregrounds; ++i) {
    auto& f = w.foregrounds[std::size_t(i)];
    f.id = ObjectId(i);
    f.category = int(rng.below(std::uint64_t(cfg.n_categories)));
    f.latent_style = Vec(kStyleDim);
    for (int j = 0; j < kStyleDim; ++j) f.latent_style[j] = rng.normal();
    f.aspect_ratio =
        clamp_aspect(std::exp(mu[std::size_t(f.category)] + kAspectSigmaWithin * rng.normal()));
    f.feature = embed_with_latent(fg_embed, f.category, kCategoryGain, f.latent_style,
                                  cfg.noise_sigma, rng);
  }

  // Precompute per-category id lists and log aspects for the oracle scans.
  std::vector<std::vector<ObjectId>> by_category(std::size_t(cfg.n_categories));
  for (const auto& f : w.foregrounds) by_category[std::size_t(f.category)].push_back(f.id);

  double oracle_total = 0.0;
  w.backgrounds.resize(std::size_t(cfg.n_backgrounds));
  for (int i = 0; i < cfg.n_backgrounds; ++i) {
    auto& b = w.backgrounds[std::size_t(i)];
    b.id = ObjectId(i);
    b.context_type = int(rng.below(std::uint64_t(cfg.n_context_types())));
    Vec nuisance(kNuisanceDim);
    for (int j = 0; j < kNuisanceDim; ++j) nuisance[j] = rng.normal();
    b.context_feature = embed_with_latent(bg_embed, b.context_type, kContextGain, nuisance,
                                          cfg.noise_sigma, rng);

    std::vector<int> compatible_categories;
    for (int c = 0; c < cfg.n_categories; ++c) {
      if (cfg.compat_table[std::size_t(b.context_type)][std::size_t(c)]) {
        compatible_categories.push_back(c);
      }
    }

    bool placed = false;
    for (int attempt = 0; attempt < kHoleRetries && !placed; ++attempt) {
      const int anchor =
          compatible_categories[std::size_t(rng.below(std::uint64_t(compatible_categories.size())))];
      b.hole_aspect_ratio =
          clamp_aspect(std::exp(mu[std::size_t(anchor)] + kHoleAspectSigma * rng.normal()));
      b.oracle_compatible_ids.clear();
      for (int c : compatible_categories) {
        for (ObjectId fid : by_category[std::size_t(c)]) {
          const auto& f = w.foregrounds[std::size_t(fid)];
          if (aspect_compatible(f.aspect_ratio, b.hole_aspect_ratio, cfg.aspect_jitter)) {
            b.oracle_compatible_ids.push_back(fid);
          }
        }
      }
      placed = !b.oracle_compatible_ids.empty();
    }
    if (!placed) {
      throw InfeasibleWorldError("background " + std::to_string(i) +
                                 ": empty oracle set after " + std::to_string(kHoleRetries) +
                                 " hole retries");
    }
    std::sort(b.oracle_compatible_ids.begin(), b.oracle_compatible_ids.end());
    b.original_object_id =
        b.oracle_compatible_ids[std::size_t(rng.below(std::uint64_t(b.oracle_compatible_ids.size())))];
    oracle_total += double(b.oracle_compatible_ids.size());
  }
  w.mean_oracle_set_size = oracle_total / double(cfg.n_backgrounds);

  // 90/10 split (seeded shuffle); eval backgrounds are the held-out queries.
  std::vector<ObjectId> order(std::size_t(cfg.n_backgrounds));
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng(seed_fold(cfg.seed, "split"));
  split_rng.shuffle(order);
  const std::size_t n_train = std::size_t(std::lround(cfg.train_fraction * cfg.n_backgrounds));
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i < n_train) {
      w.train_bg_ids.push_back(order[i]);
    } else {
      w.eval_bg_ids.push_back(order[i]);
      w.backgrounds[std::size_t(order[i])].eval_split = true;
    }
  }
  std::sort(w.train_bg_ids.begin(), w.train_bg_ids.end());
  std::sort(w.eval_bg_ids.begin(), w.eval_bg_ids.end());
  return w;
}

// ---------------------------------------------------------------------------
// Catalog serialization
// ---------------------------------------------------------------------------

namespace {

std::string field(const std::string& line, const std::string& name) {
  const std::string key = name + ":";
  std::size_t pos = 0;
  while (pos < line.size()) {
    const std::size_t end = line.find(' ', pos);
    const std::string tok = line.substr(pos, end == std::string::npos ? end : end - pos);
    if (tok.rfind(key, 0) == 0) return tok.substr(key.size());
    if (end == std::string::npos) break;
    pos = end + 1;
  }
  throw IoError("missing field '" + name + "' in line: " + line);
}

}  // namespace

void write_world(const World& world, const std::string& dir, const std::string& config_line) {
  {
    std::ostringstream out;
    out << "# config " << config_line << "\n";
    for (const auto& f : world.foregrounds) {
      out << "id:" << f.id << " category:" << f.category
          << " aspect:" << format_double(f.aspect_ratio) << "\n";
    }
    write_text_file(dir + "/foregrounds.txt", out.str());
  }
  {
    std::ostringstream out;
    out << "# config " << config_line << "\n";
    for (const auto& b : world.backgrounds) {
      out << "id:" << b.id << " context:" << b.context_type
          << " hole_aspect:" << format_double(b.hole_aspect_ratio)
          << " original:" << b.original_object_id
          << " split:" << (b.eval_split ? "eval" : "train") << "\n";
    }
    write_text_file(dir + "/backgrounds.txt", out.str());
  }
  {
    std::ostringstream out;
    out << "# config " << config_line << "\n";
    for (ObjectId id : world.eval_bg_ids) {
      const auto& b = world.backgrounds[std::size_t(id)];
      out << "id:" << b.id << " compatible:";
      for (std::size_t i = 0; i < b.oracle_compatible_ids.size(); ++i) {
        if (i) out << ',';
        out << b.oracle_compatible_ids[i];
      }
      out << "\n";
    }
    write_text_file(dir + "/oracle_eval.txt", out.str());
  }
  write_feature_matrix(dir + "/fg_features.bin", world.foreground_features());
  write_feature_matrix(dir + "/bg_features.bin", world.background_features());
}

World read_world(const WorldConfig& cfg, const std::string& dir) {
  cfg.validate();
  World w;
  w.cfg = cfg;

  const Mat fg_feat = read_feature_matrix(dir + "/fg_features.bin");
  const Mat bg_feat = read_feature_matrix(dir + "/bg_features.bin");

  for (const auto& line : read_lines(dir + "/foregrounds.txt")) {
    ForegroundObject f;
    f.id = ObjectId(std::stoull(field(line, "id")));
    f.category = std::stoi(field(line, "category"));
    f.aspect_ratio = parse_double(field(line, "aspect"));
    w.foregrounds.push_back(std::move(f));
  }
  if (Index(w.foregrounds.size()) != fg_feat.rows()) {
    throw IoError("foreground catalog/feature row count mismatch in " + dir);
  }
  for (auto& f : w.foregrounds) f.feature = fg_feat.row(Index(f.id)).transpose();

  for (const auto& line : read_lines(dir + "/backgrounds.txt")) {
    BackgroundQuery b;
    b.id = ObjectId(std::stoull(field(line, "id")));
    b.context_type = std::stoi(field(line, "context"));
    b.hole_aspect_ratio = parse_double(field(line, "hole_aspect"));
    b.original_object_id = ObjectId(std::stoull(field(line, "original")));
    b.eval_split = field(line, "split") == "eval";
    w.backgrounds.push_back(std::move(b));
  }
  if (Index(w.backgrounds.size()) != bg_feat.rows()) {
    throw IoError("background catalog/feature row count mismatch in " + dir);
  }
  for (auto& b : w.backgrounds) {
    b.context_feature = bg_feat.row(Index(b.id)).transpose();
    if (b.eval_split) {
      w.eval_bg_ids.push_back(b.id);
    } else {
      w.train_bg_ids.push_back(b.id);
    }
  }

  double total = 0.0;
  for (const auto& line : read_lines(dir + "/oracle_eval.txt")) {
    const ObjectId id = ObjectId(std::stoull(field(line, "id")));
    auto& b = w.backgrounds.at(std::size_t(id));
    std::stringstream ss(field(line, "compatible"));
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (!tok.empty()) b.oracle_compatible_ids.push_back(ObjectId(std::stoull(tok)));
    }
    total += double(b.oracle_compatible_ids.size());
  }
  w.mean_oracle_set_size = w.eval_bg_ids.empty() ? 0.0 : total / double(w.eval_bg_ids.size());
  return w;
}

}  // namespace ufo

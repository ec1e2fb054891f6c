#include "ufo/discriminator.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

namespace ufo {

namespace {

// Scores are clamped into the open interval so downstream log terms and the
// (0,1) range contract hold even when the sigmoid saturates in doubles.
constexpr double kScoreEps = 1e-12;
constexpr int kDegenerateBatchLimit = 100;

double stable_bce_from_logit(double z, double y) {
  // max(z,0) - z*y + log(1 + exp(-|z|))
  return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

Discriminator Discriminator::make(int context_dim, int feature_dim, int h1, int h2,
                                  std::uint64_t seed) {
  // Input: context ++ (log hole aspect, 1) ++ fg feature ++ log fg aspect.
  const int concat_dim = context_dim + 2 + feature_dim + 1;
  const int frozen_out = 2 * concat_dim;  // expansion keeps the pair recoverable
  Discriminator d;
  {
    const std::array<int, 2> dims{concat_dim, frozen_out};
    const std::array<Activation, 1> acts{Activation::relu};
    d.frozen_featurizer = make_mlp(dims, acts, seed_fold(seed, "disc-frozen"));
  }
  {
    const std::array<int, 4> dims{frozen_out, h1, h2, 1};
    const std::array<Activation, 3> acts{Activation::relu, Activation::relu,
                                         Activation::sigmoid};
    d.trainable_head = make_mlp(dims, acts, seed_fold(seed, "disc-head"));
  }
  return d;
}

Vec disc_pair_input(const BackgroundQuery& b, const ForegroundObject& f) {
  const Index cd = b.context_feature.size();
  const Index fd = f.feature.size();
  Vec x(cd + 2 + fd + 1);
  // Aspect entries carry a fixed encoding gain so the two aspect ratios keep
  // comparable energy next to the wide feature blocks; without it the head
  // underfits the aspect part of compatibility at desk scale.
  constexpr double kAspectEncodingGain = 5.0;
  x.head(cd) = b.context_feature;
  x[cd] = kAspectEncodingGain * std::log(b.hole_aspect_ratio);
  x[cd + 1] = 1.0;
  x.segment(cd + 2, fd) = f.feature;
  x[cd + 2 + fd] = kAspectEncodingGain * std::log(f.aspect_ratio);
  return x;
}

double disc_score(const Discriminator& d, const BackgroundQuery& b,
                  const ForegroundObject& f) {
  const Vec x = disc_pair_input(b, f);
  if (x.size() != d.frozen_featurizer.in_dim()) {
    throw DimMismatchError("disc_score: pair input dim " + std::to_string(x.size()) +
                           " vs featurizer dim " +
                           std::to_string(d.frozen_featurizer.in_dim()));
  }
  const Vec h = mlp_forward(d.frozen_featurizer, x);
  const double s = mlp_forward(d.trainable_head, h)[0];
  return std::clamp(s, kScoreEps, 1.0 - kScoreEps);
}

Vec disc_scores(const Discriminator& d, const BackgroundQuery& b,
                const World& world, std::span<const ObjectId> fg_ids) {
  if (fg_ids.empty()) return Vec(0);
  Mat inputs(Index(fg_ids.size()), d.frozen_featurizer.in_dim());
  for (std::size_t i = 0; i < fg_ids.size(); ++i) {
    inputs.row(Index(i)) = disc_pair_input(b, world.fg(fg_ids[i])).transpose();
  }
  const Mat h = mlp_forward(d.frozen_featurizer, inputs);
  const Mat out = mlp_forward(d.trainable_head, h);
  Vec scores(out.rows());
  for (Index i = 0; i < out.rows(); ++i) {
    scores[i] = std::clamp(out(i, 0), kScoreEps, 1.0 - kScoreEps);
  }
  return scores;
}

PairClass classify_score(double score, double t_high, double t_low) {
  if (!(t_low >= 0.0 && t_low < t_high && t_high <= 1.0)) {
    throw BadThresholdsError("thresholds must satisfy 0 <= t_low < t_high <= 1");
  }
  if (score > t_high) return PairClass::positive;
  if (score < t_low) return PairClass::negative;
  return PairClass::uncertain;
}

PairClass classify_with_thresholds(const Discriminator& d, const BackgroundQuery& b,
                                   const ForegroundObject& f, double t_high,
                                   double t_low) {
  if (!(t_low >= 0.0 && t_low < t_high && t_high <= 1.0)) {
    throw BadThresholdsError("thresholds must satisfy 0 <= t_low < t_high <= 1");
  }
  return classify_score(disc_score(d, b, f), t_high, t_low);
}

double disc_cross_entropy(const MlpParams& head, const Mat& frozen_rows, const Vec& labels) {
  MlpForwardCache cache;
  mlp_forward_cached(head, frozen_rows, cache);
  const Mat& logits = cache.pre.back();
  double loss = 0.0;
  for (Index i = 0; i < logits.rows(); ++i) {
    loss += stable_bce_from_logit(logits(i, 0), labels[i]);
  }
  return loss / double(std::max<Index>(1, logits.rows()));
}

namespace {

// One Adam pass over the (already frozen-mapped) rows in the given order.
// Returns the mean cross-entropy seen during the pass.
double disc_epoch(MlpParams& head, AdamState& opt, const Mat& frozen_rows,
                  const Vec& labels, std::span<const std::size_t> order, int batch_size,
                  int& degenerate_streak) {
  const std::size_t n = order.size();
  double loss_sum = 0.0;
  std::size_t seen = 0;
  for (std::size_t start = 0; start < n; start += std::size_t(batch_size)) {
    const std::size_t b = std::min<std::size_t>(std::size_t(batch_size), n - start);
    Mat X(Index(b), frozen_rows.cols());
    Vec y(static_cast<Index>(b));
    for (std::size_t i = 0; i < b; ++i) {
      X.row(Index(i)) = frozen_rows.row(Index(order[start + i]));
      y[Index(i)] = labels[Index(order[start + i])];
    }
    const double y_sum = y.sum();
    if (y_sum == 0.0 || y_sum == double(b)) {
      if (++degenerate_streak > kDegenerateBatchLimit) {
        throw DegenerateDataError("more than " + std::to_string(kDegenerateBatchLimit) +
                                  " consecutive single-class batches");
      }
    } else {
      degenerate_streak = 0;
    }

    MlpForwardCache cache;
    mlp_forward_cached(head, X, cache);
    const Mat& logits = cache.pre.back();
    Mat dz(logits.rows(), 1);
    for (Index i = 0; i < logits.rows(); ++i) {
      loss_sum += stable_bce_from_logit(logits(i, 0), y[i]);
      dz(i, 0) = (sigmoid(logits(i, 0)) - y[i]) / double(b);
    }
    seen += b;
    const MlpGrads grads = mlp_backward_from_logits(head, X, cache, dz);
    adam_step(opt, head, grads);
  }
  return seen ? loss_sum / double(seen) : 0.0;
}

DiscTrainResult run_training(Discriminator& d,
                             const std::function<void(int, Mat&, Vec&)>& make_epoch_inputs,
                             const Mat& val_frozen, const Vec& val_labels,
                             const DiscTrainConfig& cfg) {
  AdamState opt = AdamState::init(
      d.trainable_head, AdamConfig{cfg.lr, cfg.beta1, cfg.beta2, cfg.epsilon});
  DiscTrainResult result;
  MlpParams best_head = d.trainable_head;
  double best_val = std::numeric_limits<double>::infinity();
  int stale = 0;
  int degenerate_streak = 0;
  Rng order_rng(seed_fold(cfg.seed, "disc-order"));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Mat inputs;
    Vec labels;
    make_epoch_inputs(epoch, inputs, labels);
    const Mat frozen_rows = mlp_forward(d.frozen_featurizer, inputs);
    std::vector<std::size_t> order(std::size_t(frozen_rows.rows()));
    std::iota(order.begin(), order.end(), 0);
    order_rng.shuffle(order);
    const double train_loss = disc_epoch(d.trainable_head, opt, frozen_rows, labels, order,
                                         cfg.batch_size, degenerate_streak);
    result.train_loss.push_back(train_loss);
    result.epochs_run = epoch + 1;

    if (val_frozen.rows() > 0) {
      const double val = disc_cross_entropy(d.trainable_head, val_frozen, val_labels);
      result.val_loss.push_back(val);
      if (val < best_val) {
        best_val = val;
        best_head = d.trainable_head;
        result.best_epoch = epoch;
        stale = 0;
      } else if (++stale >= cfg.patience) {
        break;
      }
    } else {
      best_head = d.trainable_head;
      result.best_epoch = epoch;
    }
  }
  d.trainable_head = std::move(best_head);
  return result;
}

}  // namespace

DiscTrainResult train_discriminator_on_pairs(Discriminator& d, const Mat& train_inputs,
                                             const Vec& train_labels, const Mat& val_inputs,
                                             const Vec& val_labels,
                                             const DiscTrainConfig& cfg) {
  const Mat val_frozen =
      val_inputs.rows() > 0 ? mlp_forward(d.frozen_featurizer, val_inputs) : Mat(0, 0);
  auto epoch_inputs = [&](int, Mat& X, Vec& y) {
    X = train_inputs;
    y = train_labels;
  };
  return run_training(d, epoch_inputs, val_frozen, val_labels, cfg);
}

DiscTrainResult train_discriminator(Discriminator& d, const World& world,
                                    std::span<const ObjectId> train_bg_ids,
                                    const DiscTrainConfig& cfg) {
  if (train_bg_ids.empty()) throw ValidationError("train_discriminator: no backgrounds");
  const std::uint64_t frozen_hash_before = d.frozen_featurizer.weight_hash();

  // Hold out a fixed slice of backgrounds for validation; their pairs are
  // drawn once so the early-stop signal is comparable across epochs.
  std::vector<ObjectId> ids(train_bg_ids.begin(), train_bg_ids.end());
  Rng split_rng(seed_fold(cfg.seed, "disc-val-split"));
  split_rng.shuffle(ids);
  const std::size_t n_val =
      std::min(ids.size() - 1, std::size_t(std::lround(cfg.val_fraction * double(ids.size()))));
  const std::vector<ObjectId> val_ids(ids.end() - std::ptrdiff_t(n_val), ids.end());
  std::vector<ObjectId> sgd_ids(ids.begin(), ids.end() - std::ptrdiff_t(n_val));
  std::sort(sgd_ids.begin(), sgd_ids.end());

  const std::uint64_t n_fg = world.foregrounds.size();
  auto random_negative = [&](Rng& rng, ObjectId original) {
    ObjectId fid = rng.below(n_fg);
    while (fid == original) fid = rng.below(n_fg);
    return fid;
  };

  auto build_pairs = [&](std::span<const ObjectId> bgs, Rng& rng, Mat& X, Vec& y) {
    X = Mat(Index(bgs.size()) * 2, Index(world.cfg.context_dim + 2 + world.cfg.feature_dim + 1));
    y = Vec(X.rows());
    Index row = 0;
    for (ObjectId bid : bgs) {
      const auto& b = world.bg(bid);
      X.row(row) = disc_pair_input(b, world.fg(b.original_object_id)).transpose();
      y[row++] = 1.0;
      X.row(row) =
          disc_pair_input(b, world.fg(random_negative(rng, b.original_object_id))).transpose();
      y[row++] = 0.0;
    }
  };

  Mat val_inputs(0, 0);
  Vec val_labels;
  if (!val_ids.empty()) {
    Rng val_rng(seed_fold(cfg.seed, "disc-val-pairs"));
    std::vector<ObjectId> sorted_val = val_ids;
    std::sort(sorted_val.begin(), sorted_val.end());
    build_pairs(sorted_val, val_rng, val_inputs, val_labels);
  }
  const Mat val_frozen =
      val_inputs.rows() > 0 ? mlp_forward(d.frozen_featurizer, val_inputs) : Mat(0, 0);

  auto epoch_inputs = [&](int epoch, Mat& X, Vec& y) {
    Rng rng(seed_fold(seed_fold(cfg.seed, "disc-negatives"), std::uint64_t(epoch)));
    build_pairs(sgd_ids, rng, X, y);
  };
  DiscTrainResult result = run_training(d, epoch_inputs, val_frozen, val_labels, cfg);

  if (d.frozen_featurizer.weight_hash() != frozen_hash_before) {
    throw Error("frozen featurizer changed during discriminator training");
  }
  return result;
}

}  // namespace ufo

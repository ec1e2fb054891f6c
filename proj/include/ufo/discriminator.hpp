#pragma once

#include <span>
#include <vector>

#include "ufo/encoders.hpp"

namespace ufo {

// Coupled-input compatibility classifier: the pair is concatenated
// (background context, hole aspect encoding, foreground feature, log
// foreground aspect), passed through a frozen random featurizer and a
// trainable head ending in a scalar sigmoid. Trained with sigmoid
// cross-entropy on (original = positive, random = negative) pairs.

struct PairExample {
  ObjectId background_id = 0;
  ObjectId foreground_id = 0;
  int label = 0;  // 1 = compatible (original object), 0 = incompatible
};

enum class PairClass { positive, negative, uncertain };

struct Discriminator {
  MlpParams frozen_featurizer;  // concat_dim -> concat_dim, relu; fixed
  MlpParams trainable_head;     // -> h1 -> h2 -> 1, relu/relu/sigmoid

  int input_dim() const { return int(frozen_featurizer.in_dim()); }

  static Discriminator make(int context_dim, int feature_dim, int h1, int h2,
                            std::uint64_t seed);
};

struct DiscTrainConfig {
  double lr = 2e-5;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int epochs = 40;
  int batch_size = 64;
  int patience = 5;  // early stop on stalled validation cross-entropy
  double val_fraction = 0.1;
  std::uint64_t seed = 0;
};

struct DiscTrainResult {
  std::vector<double> train_loss;  // per epoch
  std::vector<double> val_loss;    // per epoch
  int best_epoch = -1;
  int epochs_run = 0;
};

Vec disc_pair_input(const BackgroundQuery& b, const ForegroundObject& f);

double disc_score(const Discriminator& d, const BackgroundQuery& b,
                  const ForegroundObject& f);

// Scores one background against many foregrounds in a single batched pass.
Vec disc_scores(const Discriminator& d, const BackgroundQuery& b,
                const World& world, std::span<const ObjectId> fg_ids);

PairClass classify_with_thresholds(const Discriminator& d, const BackgroundQuery& b,
                                   const ForegroundObject& f, double t_high,
                                   double t_low);
PairClass classify_score(double score, double t_high, double t_low);

// Mean sigmoid cross-entropy of the head on pre-featurized rows.
double disc_cross_entropy(const MlpParams& head, const Mat& frozen_rows, const Vec& labels);

// Adam/BCE training of the head on fixed pair rows (raw concat inputs).
// The frozen featurizer is applied once up front and never updated.
DiscTrainResult train_discriminator_on_pairs(Discriminator& d, const Mat& train_inputs,
                                             const Vec& train_labels, const Mat& val_inputs,
                                             const Vec& val_labels,
                                             const DiscTrainConfig& cfg);

// World-level training: one positive (the original object) per background
// per epoch, one fresh random negative per positive per epoch.
DiscTrainResult train_discriminator(Discriminator& d, const World& world,
                                    std::span<const ObjectId> train_bg_ids,
                                    const DiscTrainConfig& cfg);

}  // namespace ufo

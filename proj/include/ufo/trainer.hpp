#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ufo/encoders.hpp"
#include "ufo/tripletgen.hpp"

namespace ufo {

// Encoder training: triplet hinge loss over mined triplets, plus the
// ablation modes (original-only triplets, regression to the original's
// embedding, and no training at all).

enum class TrainMode { ufo, no_discriminator, regression, no_bg_training };

TrainMode train_mode_from_string(const std::string& s);
std::string to_string(TrainMode mode);

struct TrainConfig {
  double margin = 0.3;
  double lr = 1e-5;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int iterations = 20000;
  int batch_size = 64;
  TrainMode mode = TrainMode::ufo;
  std::uint64_t seed = 0;
  int log_every = 100;
  // ufo mode: when > 0, request a fresh triplet set from the source every
  // remine_every iterations instead of training on one fixed set.
  int remine_every = 0;

  void validate() const;
};

// Segment index -> triplets for that stretch of training.
using TripletSource = std::function<std::vector<Triplet>(int segment)>;

// max(0, c_neg + margin - c_pos)
double triplet_loss(double c_pos, double c_neg, double margin);

// One batch, rows aligned: background tower inputs against fixed unit
// embeddings of the positive and negative foregrounds.
struct TripletBatch {
  Mat bg_inputs;   // B x (context_dim + 2)
  Mat pos_embed;   // B x embed_dim, unit rows
  Mat neg_embed;   // B x embed_dim, unit rows
};

// Gradient of the mean hinge loss with respect to the encoder parameters;
// satisfied triplets contribute exactly zero.
MlpGrads loss_gradient(const BackgroundEncoder& encoder, const TripletBatch& batch,
                       double margin, double* mean_loss = nullptr);

struct TrainLogEntry {
  int iteration = 0;
  double mean_loss = 0.0;
  double wall_ms = 0.0;
};

struct TrainResult {
  BackgroundEncoder encoder;
  std::vector<TrainLogEntry> log;
  double initial_mean_loss = 0.0;
  double final_mean_loss = 0.0;
};

TrainResult train_encoder(const World& world, const ForegroundEncoder& fg_encoder,
                          BackgroundEncoder encoder, const std::vector<Triplet>& triplets,
                          const TrainConfig& cfg);

TrainResult train_encoder(const World& world, const ForegroundEncoder& fg_encoder,
                          BackgroundEncoder encoder, const TripletSource& source,
                          const TrainConfig& cfg);

void write_train_log(const std::string& path, const std::vector<TrainLogEntry>& log,
                     const std::string& config_line);

}  // namespace ufo

#include "ufo/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "ufo/io.hpp"

namespace ufo {

TrainMode train_mode_from_string(const std::string& s) {
  if (s == "ufo") return TrainMode::ufo;
  if (s == "no_discriminator") return TrainMode::no_discriminator;
  if (s == "regression") return TrainMode::regression;
  if (s == "no_bg_training") return TrainMode::no_bg_training;
  throw ValidationError("unknown train mode: " + s);
}

std::string to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::ufo: return "ufo";
    case TrainMode::no_discriminator: return "no_discriminator";
    case TrainMode::regression: return "regression";
    case TrainMode::no_bg_training: return "no_bg_training";
  }
  return "?";
}

void TrainConfig::validate() const {
  if (!(margin > 0.0)) throw ValidationError("train config: margin must be > 0");
  if (!(lr > 0.0)) throw ValidationError("train config: lr must be > 0");
  if (iterations < 0 || batch_size <= 0) {
    throw ValidationError("train config: bad iterations/batch_size");
  }
}

double triplet_loss(double c_pos, double c_neg, double margin) {
  return std::max(0.0, c_neg + margin - c_pos);
}

namespace {

// Shared forward/backward through the background tower and the row-wise
// l2 normalization. Upstream is dLoss/d(unit embedding) per row.
struct EncoderForward {
  MlpForwardCache cache;
  Mat raw;          // pre-normalization outputs
  Mat unit;         // normalized rows
  Vec norms;
};

EncoderForward encoder_forward(const BackgroundEncoder& encoder, const Mat& inputs) {
  EncoderForward f;
  f.raw = mlp_forward_cached(encoder.trainable_map, inputs, f.cache);
  f.norms = f.raw.rowwise().norm();
  for (Index i = 0; i < f.norms.size(); ++i) {
    if (!(f.norms[i] > kZeroNormEps)) {
      throw ZeroVectorError("background embedding has zero norm at batch row " +
                            std::to_string(i));
    }
  }
  f.unit = f.norms.cwiseInverse().asDiagonal() * f.raw;
  return f;
}

MlpGrads encoder_backward(const BackgroundEncoder& encoder, const Mat& inputs,
                          const EncoderForward& f, const Mat& unit_upstream) {
  // d(u)/d(y) with u = y/|y|: g_y = (g_u - (g_u . u) u) / |y|.
  Mat raw_upstream(f.raw.rows(), f.raw.cols());
  for (Index i = 0; i < f.raw.rows(); ++i) {
    const double dot = unit_upstream.row(i).dot(f.unit.row(i));
    raw_upstream.row(i) = (unit_upstream.row(i) - dot * f.unit.row(i)) / f.norms[i];
  }
  return mlp_backward(encoder.trainable_map, inputs, f.cache, raw_upstream);
}

double hinge_batch(const BackgroundEncoder& encoder, const TripletBatch& batch,
                   double margin, MlpGrads* grads) {
  const Index b = batch.bg_inputs.rows();
  const EncoderForward f = encoder_forward(encoder, batch.bg_inputs);
  const Vec c_pos = (f.unit.cwiseProduct(batch.pos_embed)).rowwise().sum();
  const Vec c_neg = (f.unit.cwiseProduct(batch.neg_embed)).rowwise().sum();

  double loss_sum = 0.0;
  Mat upstream = Mat::Zero(b, f.unit.cols());
  for (Index i = 0; i < b; ++i) {
    const double l = triplet_loss(std::clamp(c_pos[i], -1.0, 1.0),
                                  std::clamp(c_neg[i], -1.0, 1.0), margin);
    loss_sum += l;
    if (l > 0.0 && grads) {
      upstream.row(i) = (batch.neg_embed.row(i) - batch.pos_embed.row(i)) / double(b);
    }
  }
  if (grads) *grads = encoder_backward(encoder, batch.bg_inputs, f, upstream);
  return loss_sum / double(b);
}

double regression_batch(const BackgroundEncoder& encoder, const Mat& inputs,
                        const Mat& targets, MlpGrads* grads) {
  const Index b = inputs.rows();
  const EncoderForward f = encoder_forward(encoder, inputs);
  const Mat diff = f.unit - targets;
  const double loss = diff.squaredNorm() / double(b);
  if (grads) {
    const Mat upstream = (2.0 / double(b)) * diff;
    *grads = encoder_backward(encoder, inputs, f, upstream);
  }
  return loss;
}

}  // namespace

MlpGrads loss_gradient(const BackgroundEncoder& encoder, const TripletBatch& batch,
                       double margin, double* mean_loss) {
  if (batch.bg_inputs.rows() == 0) throw EmptyTripletsError("loss_gradient: empty batch");
  if (batch.pos_embed.rows() != batch.bg_inputs.rows() ||
      batch.neg_embed.rows() != batch.bg_inputs.rows()) {
    throw ShapeMismatchError("loss_gradient: batch row mismatch");
  }
  MlpGrads grads;
  const double loss = hinge_batch(encoder, batch, margin, &grads);
  if (mean_loss) *mean_loss = loss;
  return grads;
}

TrainResult train_encoder(const World& world, const ForegroundEncoder& fg_encoder,
                          BackgroundEncoder encoder, const TripletSource& source,
                          const TrainConfig& cfg) {
  cfg.validate();
  using Clock = std::chrono::steady_clock;
  const auto t0 = Clock::now();

  TrainResult result;
  if (cfg.mode == TrainMode::no_bg_training) {
    result.encoder = std::move(encoder);
    return result;
  }

  // Frozen tower: catalog embedded once; the hash must not change.
  const Mat catalog = embed_foreground_catalog(fg_encoder, world.foregrounds);
  const std::uint64_t catalog_hash =
      hash_doubles(catalog.data(), std::size_t(catalog.size()));

  // Background tower inputs, one row per background.
  Mat bg_inputs(Index(world.backgrounds.size()), world.cfg.context_dim + 2);
  for (const auto& bq : world.backgrounds) {
    bg_inputs.row(Index(bq.id)) = background_input(bq).transpose();
  }

  AdamState opt = AdamState::init(encoder.trainable_map,
                                  AdamConfig{cfg.lr, cfg.beta1, cfg.beta2, cfg.epsilon});

  Rng rng(seed_fold(cfg.seed, "train-encoder"));
  std::vector<Triplet> triplets;
  std::vector<std::size_t> order;
  std::size_t cursor = 0;
  int segment = -1;
  const int segment_len = cfg.remine_every > 0 ? cfg.remine_every : cfg.iterations;

  const std::uint64_t n_fg = world.foregrounds.size();
  const auto& train_ids = world.train_bg_ids;

  const int b = cfg.batch_size;
  Mat batch_inputs(b, world.cfg.context_dim + 2);
  Mat pos_embed(b, encoder.out_dim);
  Mat neg_embed(b, encoder.out_dim);

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    if (cfg.mode == TrainMode::ufo && iter / segment_len != segment) {
      segment = iter / segment_len;
      triplets = source(segment);
      if (triplets.empty()) {
        throw EmptyTripletsError("train_encoder: ufo mode with no triplets (segment " +
                                 std::to_string(segment) + ")");
      }
      order.resize(triplets.size());
      std::iota(order.begin(), order.end(), 0);
      cursor = order.size();  // forces a shuffle on first use
    }

    // Assemble the batch for this iteration's mode.
    if (cfg.mode == TrainMode::ufo) {
      for (int i = 0; i < b; ++i) {
        if (cursor >= order.size()) {
          rng.shuffle(order);
          cursor = 0;
        }
        const Triplet& t = triplets[order[cursor++]];
        batch_inputs.row(i) = bg_inputs.row(Index(t.background_id));
        pos_embed.row(i) = catalog.row(Index(t.positive_id));
        neg_embed.row(i) = catalog.row(Index(t.negative_id));
      }
    } else {
      for (int i = 0; i < b; ++i) {
        const ObjectId bid = train_ids[rng.below(train_ids.size())];
        const ObjectId pos = world.bg(bid).original_object_id;
        batch_inputs.row(i) = bg_inputs.row(Index(bid));
        pos_embed.row(i) = catalog.row(Index(pos));
        if (cfg.mode == TrainMode::no_discriminator) {
          ObjectId neg = rng.below(n_fg);
          while (neg == pos) neg = rng.below(n_fg);
          neg_embed.row(i) = catalog.row(Index(neg));
        }
      }
    }

    MlpGrads grads;
    double loss = 0.0;
    if (cfg.mode == TrainMode::regression) {
      loss = regression_batch(encoder, batch_inputs, pos_embed, &grads);
    } else {
      TripletBatch batch{batch_inputs, pos_embed, neg_embed};
      loss = hinge_batch(encoder, batch, cfg.margin, &grads);
    }
    if (!std::isfinite(loss)) {
      throw NonFiniteLossError("train_encoder: non-finite loss at iteration " +
                               std::to_string(iter) + " (mode " + to_string(cfg.mode) +
                               ", lr " + format_double(cfg.lr) + ")");
    }
    adam_step(opt, encoder.trainable_map, grads);

    if (iter == 0) result.initial_mean_loss = loss;
    result.final_mean_loss = loss;
    if (cfg.log_every > 0 && (iter % cfg.log_every == 0 || iter + 1 == cfg.iterations)) {
      const double ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
      result.log.push_back({iter, loss, ms});
    }
  }

  const Mat catalog_after = embed_foreground_catalog(fg_encoder, world.foregrounds);
  if (hash_doubles(catalog_after.data(), std::size_t(catalog_after.size())) != catalog_hash) {
    throw Error("foreground catalog embeddings changed during encoder training");
  }
  result.encoder = std::move(encoder);
  return result;
}

TrainResult train_encoder(const World& world, const ForegroundEncoder& fg_encoder,
                          BackgroundEncoder encoder, const std::vector<Triplet>& triplets,
                          const TrainConfig& cfg) {
  TrainConfig fixed = cfg;
  fixed.remine_every = 0;
  const TripletSource source = [&triplets](int) { return triplets; };
  return train_encoder(world, fg_encoder, std::move(encoder), source, fixed);
}

void write_train_log(const std::string& path, const std::vector<TrainLogEntry>& log,
                     const std::string& config_line) {
  std::ostringstream out;
  out << "# config " << config_line << "\n";
  for (const auto& e : log) {
    out << "iteration:" << e.iteration << " mean_loss:" << format_double(e.mean_loss)
        << " wall_ms:" << format_double(e.wall_ms) << "\n";
  }
  write_text_file(path, out.str());
}

}  // namespace ufo

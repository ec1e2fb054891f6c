#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "ufo/eval.hpp"

namespace ufo {

// Pipeline driver: merged config with deterministic seed fan-out, per-stage
// artifact manifests, and the stage implementations behind the CLI.

struct IndexConfig {
  std::string kind = "exact";  // "exact" | "clustered"
  int n_list = 0;              // 0 -> round(sqrt(N))
  int n_probe = 4;
  int kmeans_iters = 25;
  std::uint64_t seed = 0;
};

struct EncoderDims {
  int enc_hidden = 256;
  int embed_dim = 128;
  int disc_h1 = 128;
  int disc_h2 = 64;
};

struct PipelineConfig {
  std::uint64_t seed = 1;
  WorldConfig world;
  EncoderDims dims;
  TrainConfig train;
  DiscTrainConfig disc;
  SamplingConfig sampling;
  IndexConfig index;
  EvalParams eval;

  static PipelineConfig defaults(std::uint64_t seed);

  // Fills every zero stage seed from the root via seed_fold and generates
  // the default compat table when none is given. Idempotent.
  void resolve();

  // Canonical JSON (sorted keys); serialize -> parse -> serialize is
  // byte-identical. This string is the reproducibility header embedded in
  // text artifacts and in every manifest record.
  std::string to_json_string() const;
  static PipelineConfig from_json_string(const std::string& s);
  std::string config_hash() const { return hash_hex(fnv1a64(to_json_string())); }
};

namespace artifacts {
inline constexpr const char* kForegrounds = "foregrounds.txt";
inline constexpr const char* kBackgrounds = "backgrounds.txt";
inline constexpr const char* kOracleEval = "oracle_eval.txt";
inline constexpr const char* kFgFeatures = "fg_features.bin";
inline constexpr const char* kBgFeatures = "bg_features.bin";
inline constexpr const char* kDiscCkpt = "disc.ckpt";
inline constexpr const char* kTriplets = "triplets.txt";
inline constexpr const char* kIndex = "fg_index.ufoi";
inline constexpr const char* kMetrics = "metrics.txt";
inline constexpr const char* kMetricsTable = "metrics_table.txt";
inline constexpr const char* kManifest = "manifest.jsonl";
std::string encoder_ckpt(TrainMode mode);
}  // namespace artifacts

// Appends one manifest record: stage, resolved config, input/output hashes.
// Wall-clock logs and timing files are listed as volatile and not hashed.
void manifest_append(const std::string& dir, const std::string& stage,
                     const PipelineConfig& cfg, const std::vector<std::string>& inputs,
                     const std::vector<std::string>& outputs,
                     const std::vector<std::string>& volatile_outputs = {});

// Throws MissingArtifactError when `file` was never produced (names the
// producer stage) and StaleArtifactError when its bytes no longer match the
// manifest record.
void require_artifact(const std::string& dir, const std::string& file,
                      const std::string& producer_stage);

void stage_gen_data(const PipelineConfig& cfg, const std::string& dir, std::ostream& out);
void stage_train_disc(const PipelineConfig& cfg, const std::string& dir, std::ostream& out);
void stage_gen_triplets(const PipelineConfig& cfg, const std::string& dir, std::ostream& out);
void stage_train_encoder(const PipelineConfig& cfg, const std::string& dir, TrainMode mode,
                         std::ostream& out);
void stage_build_index(const PipelineConfig& cfg, const std::string& dir, std::ostream& out);
void stage_query(const PipelineConfig& cfg, const std::string& dir, ObjectId bg_id, int k,
                 TrainMode encoder_mode, std::ostream& out);
void stage_eval(const PipelineConfig& cfg, const std::string& dir,
                const std::vector<EvalMode>& modes, std::ostream& out);

// Synthetic index-bench data: a seeded mixture of spherical clusters
// (n_centers = 0 draws uniform sphere vectors instead).
struct BenchRandomArgs {
  int n = 50000;
  int dim = 128;
  int n_queries = 100;
  int k = 25;
  int n_centers = 256;
  double cluster_sigma = 0.12;
};
void stage_bench_random(const PipelineConfig& cfg, const std::string& dir,
                        const BenchRandomArgs& args, std::ostream& out);
// Coupled-vs-decoupled cost on the world's catalog: discriminator-only
// ranking time against embed-then-index-query time.
void stage_bench_world(const PipelineConfig& cfg, const std::string& dir, int n_queries,
                       std::ostream& out);
void stage_ablate(const PipelineConfig& cfg, const std::string& dir,
                  const std::vector<EvalMode>& modes, std::ostream& out);

}  // namespace ufo

#pragma once

#include <string>
#include <vector>

#include "ufo/numerics.hpp"

namespace ufo {

// ---------------------------------------------------------------------------
// Binary feature-matrix file ("UFOF"): 16-byte header (magic, u32 LE row
// count, u32 LE dim, u32 LE version) then row-major little-endian f32.
// Storage is 32-bit, compute is 64-bit.
// ---------------------------------------------------------------------------

void write_feature_matrix(const std::string& path, const Mat& rows);
Mat read_feature_matrix(const std::string& path);

// ---------------------------------------------------------------------------
// Checkpoint container: magic ("UFOE" for encoders, "UFOD" for the
// discriminator), u32 version, u32 mlp count, then per MLP a layer-count/
// dims/activation header followed by f32 weights and biases.
// ---------------------------------------------------------------------------

void write_checkpoint(const std::string& path, const char magic[4],
                      const std::vector<const MlpParams*>& mlps);
std::vector<MlpParams> read_checkpoint(const std::string& path, const char magic[4]);

// ---------------------------------------------------------------------------
// Misc file plumbing.
// ---------------------------------------------------------------------------

std::uint64_t hash_file(const std::string& path);
bool file_exists(const std::string& path);
void write_text_file(const std::string& path, const std::string& contents);
std::string read_text_file(const std::string& path);
std::vector<std::string> read_lines(const std::string& path);  // skips '#' lines

}  // namespace ufo

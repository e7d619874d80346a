#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "crossview/config.hpp"
#include "crossview/params.hpp"
#include "crossview/tensor.hpp"

namespace crossview::store {

using numcore::Mat;
using numcore::Vec;

/*
 * EMB1 matrix file, bit-exact layout:
 *   bytes 0-3   ASCII "EMB1"
 *   u32 LE      version, must be 1
 *   u32 LE      rows
 *   u32 LE      dim
 *   u8          dtype code, 1 = float32 little-endian
 *   3 bytes     zero padding
 *   payload     rows*dim float32, row-major
 * In-memory values are 64-bit; save truncates to f32, load upconverts.
 */
void save_matrix(const Mat& m, const std::filesystem::path& path);
Mat load_matrix(const std::filesystem::path& path);

struct LocationRecord {
  std::string id;
  double lat = 0.0;
  double lon = 0.0;
  std::array<std::uint32_t, 4> ground_rows{};  // N,E,S,W order
  std::uint32_t sat_row = 0;
  std::vector<std::uint32_t> labels;  // optional; one entry = single-label
  std::string split;
};

struct QuadrupletDataset {
  std::vector<LocationRecord> locations;
  Mat ground;  // rows referenced by ground_rows, unit-norm after load
  Mat sat;
  std::string ground_ref = "ground.emb1";
  std::string sat_ref = "sat.emb1";
  bool normalized = true;

  std::size_t size() const { return locations.size(); }
  Mat quad(std::size_t i) const;        // the 4 x D ground block of location i
  Vec sat_feature(std::size_t i) const;
};

QuadrupletDataset load_dataset(const std::filesystem::path& manifest_path);
void save_dataset(const QuadrupletDataset& ds, const std::filesystem::path& manifest_path);

struct Prompt {
  std::uint32_t row = 0;
  std::optional<std::string> text;
  std::optional<double> score;
};

struct PromptClass {
  std::string name;
  std::vector<Prompt> prompts;
};

struct PromptSet {
  std::vector<PromptClass> classes;
  Mat matrix;  // prompt rows, renormalized on load
  std::string matrix_ref;
  std::string view_tag;
  bool unequal_T = false;

  std::size_t C() const { return classes.size(); }
  std::size_t T() const;  // uniform prompt count; contract error when unequal
  Vec prompt_vec(std::size_t c, std::size_t t) const;
};

PromptSet load_prompt_set(const std::filesystem::path& path);
void save_prompt_set(const PromptSet& ps, const std::filesystem::path& path);

struct ModelCheckpoint {
  std::size_t d_in = 0;
  std::size_t d_out = 0;
  align::ModelParams params;
  trainer::OptimizerState opt;
  trainer::TrainConfig cfg;
  std::size_t epoch = 0;
};

// directory layout: checkpoint.json plus one EMB1 file per tensor and per
// optimizer moment; reload-then-save is byte-identical
void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& dir);
ModelCheckpoint load_checkpoint(const std::filesystem::path& dir);

struct SynthResult {
  QuadrupletDataset dataset;
  PromptSet clean_prompts;      // near the class anchors
  PromptSet corrupted_prompts;  // half of each class replaced by generic noise
};

// Class anchors are orthonormal in ground space; satellite features live in a
// randomly rotated copy of that space so training is necessary.
SynthResult synth_dataset(std::size_t classes, std::size_t per_class, std::size_t dim,
                          double noise, std::uint64_t seed);

}  // namespace crossview::store

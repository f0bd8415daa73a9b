#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "reftrack/formats.hpp"
#include "reftrack/matching.hpp"
#include "reftrack/nn.hpp"

namespace reftrack {

/// Synthetic benchmark parameters: colored shapes on a noise background
/// with axis-aligned motion, wall bounces and staged crossings.
struct SceneSpec {
  int canvas_h = 64;
  int canvas_w = 64;
  int frames = 20;
  int min_objects = 2;
  int max_objects = 4;
  double min_radius = 7.0;
  double max_radius = 12.0;
  double min_speed = 0.9;
  double max_speed = 2.0;
  double static_prob = 0.3;
  double occlusion_prob = 0.5;
  int train_sequences = 200;
  int test_sequences = 24;
  int expressions_per_sequence = 2;
  std::uint64_t seed = 7;

  void validate() const;
};

inline constexpr int kShapeCount = 3;   // circle, square, triangle
inline constexpr int kColorCount = 4;   // red, green, blue, yellow
inline constexpr int kMotionCount = 5;  // left, right, up, down, still

const char* shape_word(int shape);
const char* color_word(int color);
const char* motion_phrase(int motion);  // e.g. "moving left", "staying still"

/// Conjunction of attribute predicates; empty fields match everything.
struct ExpressionTemplate {
  std::optional<int> color;
  std::optional<int> shape;
  std::optional<int> motion;

  std::string text() const;
};

/// Every template the grammar can produce (at least one field set).
std::vector<ExpressionTemplate> all_templates();

/// Tokens used by the grammar, for vocabulary construction.
std::vector<std::string> grammar_tokens();

struct SceneObject {
  int id = 0;
  int shape = 0;
  int color = 0;
  double radius = 8.0;
  double x = 0, y = 0;    // center, pixels
  double vx = 0, vy = 0;  // pixels per frame
};

/// One simulated sequence held in memory before rendering.
struct Scene {
  SceneSpec spec;
  std::vector<SceneObject> initial;
  bool has_occlusion_event = false;
  std::uint64_t noise_seed = 0;

  /// Object states at a frame (positions advanced with wall bounces).
  std::vector<SceneObject> at_frame(int t) const;
};

int motion_category(const SceneObject& obj);
bool template_matches(const ExpressionTemplate& tmpl, const SceneObject& obj);

Scene make_scene(const SceneSpec& spec, Rng& rng);
Tensor render_frame(const Scene& scene, int t);  // [H x W x 3]
/// Ground truth at stride-4 mask resolution; boxes are amodal, clipped to
/// the canvas; masks cover the visible region only.
GroundTruthFrame ground_truth(const Scene& scene, int t, const ExpressionTemplate& tmpl);

/// Writes dataset.txt, train/ and test/ splits; deterministic in the seed.
/// Returns the number of unsatisfiable expression files (kept, warned).
int generate_dataset(const SceneSpec& spec, const std::string& out_dir);

/// Dataset access used by training and evaluation.
struct DatasetIndex {
  std::string root;
  SceneSpec spec;
  std::vector<std::string> vocab_tokens;
  struct SequenceRef {
    std::string dir;           // absolute path
    std::string name;
    std::vector<std::string> gt_files;
    bool occlusion = false;
    int frames = 0;
  };
  std::vector<SequenceRef> train;
  std::vector<SequenceRef> test;
};
DatasetIndex load_dataset_index(const std::string& root);

std::string frame_path(const std::string& seq_dir, int frame);

}  // namespace reftrack

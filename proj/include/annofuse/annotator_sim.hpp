#pragma once

// Synthetic multi-expert annotation sets.
//
// Ground truth scenes hold non-overlapping boxes with uniform categories.
// Each simulated expert owns a transition matrix over C true categories and
// C + 1 outcomes (the extra column is no_obj, a missed object). For every
// ground-truth object the expert draws an outcome from the object's row and,
// unless it is no_obj, reports a jittered copy of the box whose IoU with the
// truth exceeds the configured floor.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "annofuse/error.hpp"
#include "annofuse/geometry.hpp"
#include "annofuse/parallel.hpp"
#include "annofuse/records.hpp"

namespace annofuse {

using Rng = std::mt19937_64;

struct Canvas {
  double width = 0.0;
  double height = 0.0;
};

struct SimConfig {
  int num_scenes = 1000;
  int num_experts = 3;
  /// Shared proficiency p of every simulated expert.
  double proficiency = 0.8;
  double diag_stddev = 0.05;
  /// Mean of the diagonal draw. Unset means `proficiency`.
  std::optional<double> diagonal_mean;
  /// Jittered boxes keep IoU > floor with the truth. Unset means
  /// `proficiency`; 1.0 disables jitter entirely.
  std::optional<double> jitter_iou_floor;
  int num_categories = 10;
  Canvas canvas{256.0, 256.0};
  int min_objects = 1;
  int max_objects = 5;
  double min_size = 20.0;
  double max_size = 60.0;
  /// Ground-truth boxes within a scene never overlap more than this.
  double max_truth_overlap = 0.3;
  std::uint64_t seed = 0;

  double effective_diagonal_mean() const { return diagonal_mean.value_or(proficiency); }
  double effective_jitter_floor() const { return jitter_iou_floor.value_or(proficiency); }
};

inline void validate(const SimConfig& c) {
  auto fail = [](const std::string& msg) { throw ValidationError("simulation config: " + msg); };
  if (c.num_scenes < 0) fail("scene count must be >= 0");
  if (c.num_experts < 1) fail("expert count must be >= 1");
  if (!(c.proficiency > 0.0 && c.proficiency < 1.0)) {
    fail("proficiency must lie in (0, 1), got " + std::to_string(c.proficiency));
  }
  if (!(c.diag_stddev >= 0.0) || !std::isfinite(c.diag_stddev)) fail("diagonal stddev must be >= 0");
  if (c.diagonal_mean && !(*c.diagonal_mean >= 0.5 && *c.diagonal_mean <= 1.0)) {
    fail("diagonal mean must lie in [0.5, 1]");
  }
  if (c.jitter_iou_floor && !(*c.jitter_iou_floor > 0.0 && *c.jitter_iou_floor <= 1.0)) {
    fail("jitter IoU floor must lie in (0, 1]");
  }
  if (c.num_categories < 2) fail("at least 2 categories are required");
  if (!(c.canvas.width > 0.0 && c.canvas.height > 0.0) || !std::isfinite(c.canvas.width) ||
      !std::isfinite(c.canvas.height)) {
    fail("canvas must have positive finite size");
  }
  if (c.min_objects < 0 || c.min_objects > c.max_objects) fail("object count range is empty");
  if (!(c.min_size > 0.0 && c.min_size <= c.max_size)) fail("object size range is empty");
  if (c.max_size > std::min(c.canvas.width, c.canvas.height)) fail("max object size exceeds canvas");
  if (!(c.max_truth_overlap >= 0.0 && c.max_truth_overlap < 1.0)) {
    fail("max truth overlap must lie in [0, 1)");
  }
}

/// Expert category confusion. Row i is the outcome distribution for true
/// category i; column C is no_obj.
class TransitionMatrix {
 public:
  TransitionMatrix() = default;
  TransitionMatrix(std::string expert, int num_categories)
      : expert_(std::move(expert)),
        categories_(num_categories),
        entries_(static_cast<std::size_t>(num_categories) * (num_categories + 1), 0.0) {}

  const std::string& expert() const noexcept { return expert_; }
  int num_categories() const noexcept { return categories_; }
  int no_obj() const noexcept { return categories_; }

  double& at(int row, int col) { return entries_[index(row, col)]; }
  double at(int row, int col) const { return entries_[index(row, col)]; }

  /// Row-stochastic within `tol`, nonnegative, strictly diagonally dominant, a_ii in [0.5, 1].
  bool is_valid(double tol = 1e-9) const {
    for (int i = 0; i < categories_; ++i) {
      double sum = 0.0;
      for (int j = 0; j <= categories_; ++j) {
        const double v = at(i, j);
        if (!(v >= 0.0)) return false;
        if (j != i && !(at(i, i) > v)) return false;
        sum += v;
      }
      if (std::abs(sum - 1.0) > tol) return false;
      if (at(i, i) < 0.5 || at(i, i) > 1.0) return false;
    }
    return true;
  }

  /// Draws an outcome column for true category `row`.
  int sample(int row, Rng& rng) const {
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    double cum = 0.0;
    int last_positive = row;
    for (int j = 0; j <= categories_; ++j) {
      const double v = at(row, j);
      if (v > 0.0) last_positive = j;
      cum += v;
      if (u < cum) return j;
    }
    return last_positive;
  }

  friend bool operator==(const TransitionMatrix&, const TransitionMatrix&) = default;

 private:
  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * (categories_ + 1) + col;
  }

  std::string expert_;
  int categories_ = 0;
  std::vector<double> entries_;
};

/// Diagonal value from a raw draw: clamp into [0.5, 1].
inline double clamp_diagonal(double alpha) { return std::min(std::max(0.5, alpha), 1.0); }

/// splitmix64 finalizer, used to derive independent stream seeds.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed of the RNG stream for (seed, purpose, a, b). Streams with different
/// keys are independent, which lets scenes be generated in any order.
inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t purpose, std::uint64_t a,
                                 std::uint64_t b = 0) {
  return mix64(mix64(mix64(mix64(seed) ^ purpose) ^ a) ^ b);
}

inline std::string expert_id(int expert_index) { return "expert_" + std::to_string(expert_index + 1); }

inline TransitionMatrix build_transition_matrix(int expert_index, const SimConfig& config, Rng& rng) {
  const int c = config.num_categories;
  if (c < 1) throw ValidationError("transition matrix needs at least one category");
  TransitionMatrix m(expert_id(expert_index), c);
  const double mean = config.effective_diagonal_mean();
  for (int i = 0; i < c; ++i) {
    double alpha = mean;
    if (config.diag_stddev > 0.0) {
      alpha = std::normal_distribution<double>(mean, config.diag_stddev)(rng);
    }
    const double diag = clamp_diagonal(alpha);
    // C - 1 wrong categories plus no_obj share the remainder equally.
    const double off = (1.0 - diag) / c;
    for (int j = 0; j <= c; ++j) m.at(i, j) = (j == i) ? diag : off;
  }
  return m;
}

/// Rejection-samples a perturbed copy of `truth` with IoU > iou_floor,
/// clipped to the canvas. A floor of 1 or more returns `truth` unchanged.
inline Box jitter_box(const Box& truth, double iou_floor, const Canvas& canvas, Rng& rng) {
  require_valid(truth);
  if (!(area(truth) > 0.0)) throw ValidationError("jitter_box: truth box must have positive area");
  if (truth.x1 < 0.0 || truth.y1 < 0.0 || truth.x2 > canvas.width || truth.y2 > canvas.height) {
    throw ValidationError("jitter_box: truth box " + to_string(truth) + " lies outside the canvas");
  }
  if (!(iou_floor > 0.0)) throw ValidationError("jitter_box: IoU floor must be positive");
  if (iou_floor >= 1.0) return truth;

  const double w = truth.width();
  const double h = truth.height();
  double beta = 0.15;
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (int rejections = 0;; ++rejections) {
    if (rejections > 0 && rejections % 20 == 0) beta *= 0.5;
    Box b{truth.x1 + unit(rng) * beta * w, truth.y1 + unit(rng) * beta * h,
          truth.x2 + unit(rng) * beta * w, truth.y2 + unit(rng) * beta * h};
    b.x1 = std::clamp(b.x1, 0.0, canvas.width);
    b.x2 = std::clamp(b.x2, 0.0, canvas.width);
    b.y1 = std::clamp(b.y1, 0.0, canvas.height);
    b.y2 = std::clamp(b.y2, 0.0, canvas.height);
    if (b.x1 > b.x2 || b.y1 > b.y2) continue;
    if (iou(b, truth) > iou_floor) return b;
  }
}

/// One expert's view of a ground-truth scene. Never emits more boxes than
/// the scene holds.
inline std::vector<AnnotatedBox> simulate_expert(const Scene<LabeledBox>& scene,
                                                 const TransitionMatrix& matrix,
                                                 double jitter_iou_floor, Rng& rng) {
  std::vector<AnnotatedBox> out;
  const Canvas canvas{scene.width, scene.height};
  for (const LabeledBox& obj : scene.items) {
    if (obj.category < 0 || obj.category >= matrix.num_categories()) {
      throw ValidationError("simulate_expert: category " + std::to_string(obj.category) +
                            " outside the transition matrix");
    }
    const int outcome = matrix.sample(obj.category, rng);
    if (outcome == matrix.no_obj()) continue;
    out.push_back({jitter_box(obj.box, jitter_iou_floor, canvas, rng), outcome, matrix.expert(), {}});
  }
  return out;
}

struct SimulatedDataset {
  std::vector<Category> categories;
  std::vector<Annotator> annotators;
  SceneSet<LabeledBox> truth;
  /// experts[k][s] is expert k's annotation of scene s.
  std::vector<SceneSet<AnnotatedBox>> experts;
  std::vector<TransitionMatrix> matrices;
  /// Objects dropped because no placement met the overlap cap.
  int skipped_objects = 0;

  /// All experts' boxes per scene, expert 1 first.
  SceneSet<AnnotatedBox> merged_annotations() const {
    SceneSet<AnnotatedBox> out;
    out.reserve(truth.size());
    for (std::size_t s = 0; s < truth.size(); ++s) {
      Scene<AnnotatedBox> scene{truth[s].image_id, truth[s].width, truth[s].height, {}};
      for (const auto& expert : experts) {
        scene.items.insert(scene.items.end(), expert[s].items.begin(), expert[s].items.end());
      }
      out.push_back(std::move(scene));
    }
    return out;
  }
};

namespace detail {

enum : std::uint64_t { kMatrixStream = 1, kSceneStream = 2, kExpertStream = 3 };

inline std::string image_id(int index, int total) {
  int digits = 6;
  for (int t = total; t >= 1000000; t /= 10) ++digits;
  char buf[32];
  std::snprintf(buf, sizeof buf, "img_%0*d", digits, index);
  return buf;
}

struct PlacedScene {
  Scene<LabeledBox> scene;
  int skipped = 0;
};

inline PlacedScene place_objects(int index, const SimConfig& c) {
  Rng rng(stream_seed(c.seed, kSceneStream, static_cast<std::uint64_t>(index)));
  PlacedScene out;
  out.scene.image_id = image_id(index, c.num_scenes);
  out.scene.width = c.canvas.width;
  out.scene.height = c.canvas.height;
  const int count = std::uniform_int_distribution<int>(c.min_objects, c.max_objects)(rng);
  std::uniform_real_distribution<double> size(c.min_size, c.max_size);
  std::uniform_int_distribution<int> category(0, c.num_categories - 1);
  for (int k = 0; k < count; ++k) {
    const int cat = category(rng);
    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      const double w = size(rng);
      const double h = size(rng);
      const double x = std::uniform_real_distribution<double>(0.0, c.canvas.width - w)(rng);
      const double y = std::uniform_real_distribution<double>(0.0, c.canvas.height - h)(rng);
      const Box b{x, y, x + w, y + h};
      placed = std::none_of(out.scene.items.begin(), out.scene.items.end(),
                            [&](const LabeledBox& o) { return iou(o.box, b) > c.max_truth_overlap; });
      if (placed) out.scene.items.push_back({b, cat});
    }
    if (!placed) ++out.skipped;
  }
  return out;
}

}  // namespace detail

/// Ground truth, per-expert annotations and transition matrices, all a pure
/// function of `config` (including its seed). `workers` does not affect output.
inline SimulatedDataset generate_dataset(const SimConfig& config, unsigned workers = 1) {
  validate(config);
  SimulatedDataset out;
  for (int i = 0; i < config.num_categories; ++i) out.categories.push_back({i, "class_" + std::to_string(i)});
  for (int k = 0; k < config.num_experts; ++k) {
    out.annotators.push_back({expert_id(k), config.proficiency});
    Rng rng(stream_seed(config.seed, detail::kMatrixStream, static_cast<std::uint64_t>(k)));
    out.matrices.push_back(build_transition_matrix(k, config, rng));
  }

  const auto n = static_cast<std::size_t>(config.num_scenes);
  std::vector<detail::PlacedScene> placed(n);
  out.experts.assign(static_cast<std::size_t>(config.num_experts), SceneSet<AnnotatedBox>(n));
  const double floor = config.effective_jitter_floor();
  parallel_for(n, workers, [&](std::size_t s) {
    placed[s] = detail::place_objects(static_cast<int>(s), config);
    const auto& scene = placed[s].scene;
    for (int k = 0; k < config.num_experts; ++k) {
      Rng rng(stream_seed(config.seed, detail::kExpertStream, s, static_cast<std::uint64_t>(k)));
      out.experts[k][s] = {scene.image_id, scene.width, scene.height,
                           simulate_expert(scene, out.matrices[k], floor, rng)};
    }
  });
  out.truth.reserve(n);
  for (auto& p : placed) {
    out.skipped_objects += p.skipped;
    out.truth.push_back(std::move(p.scene));
  }
  return out;
}

}  // namespace annofuse

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "annofuse/geometry.hpp"

namespace annofuse {

using CategoryId = int;

struct Category {
  CategoryId id = 0;
  std::string name;

  friend bool operator==(const Category&, const Category&) = default;
};

/// A human labeler. Proficiency lies in (0, 1].
struct Annotator {
  std::string id;
  double proficiency = 1.0;

  friend bool operator==(const Annotator&, const Annotator&) = default;
};

/// Ground-truth object.
struct LabeledBox {
  Box box;
  CategoryId category = 0;

  friend bool operator==(const LabeledBox&, const LabeledBox&) = default;
};

/// One annotator's box. An unset weight means "use the annotator's proficiency".
struct AnnotatedBox {
  Box box;
  CategoryId category = 0;
  std::string annotator;
  std::optional<double> weight;

  friend bool operator==(const AnnotatedBox&, const AnnotatedBox&) = default;
};

/// Consensus box produced by fusion. `confidence` is the agreement score c.
struct FusedBox {
  Box box;
  CategoryId category = 0;
  double confidence = 0.0;
  int cluster_size = 0;
  std::vector<std::string> contributing_annotators;  // sorted, unique

  friend bool operator==(const FusedBox&, const FusedBox&) = default;
};

/// Detector output (or any box set ranked by score) in [0, 1].
struct ScoredBox {
  Box box;
  CategoryId category = 0;
  double score = 1.0;

  friend bool operator==(const ScoredBox&, const ScoredBox&) = default;
};

/// One image's worth of boxes. No pixels, only the canvas extent.
template <class Item>
struct Scene {
  std::string image_id;
  double width = 0.0;
  double height = 0.0;
  std::vector<Item> items;

  friend bool operator==(const Scene&, const Scene&) = default;
};

template <class Item>
using SceneSet = std::vector<Scene<Item>>;

}  // namespace annofuse

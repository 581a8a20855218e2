#pragma once

// Weighted boxes fusion over multiple annotators' labels for one image.
//
// Boxes are visited in a fixed order (proficiency desc, annotator id asc,
// input index asc). Each box joins the same-category fused box it overlaps
// most, provided IoU > threshold; otherwise it opens a new cluster. The fused
// box of a cluster is the proficiency-weighted mean of its members and is
// recomputed after every insertion, so later boxes match against the drifted
// mean. Confidences are assigned once all boxes are placed.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "annofuse/error.hpp"
#include "annofuse/geometry.hpp"
#include "annofuse/parallel.hpp"
#include "annofuse/records.hpp"

namespace annofuse {

enum class ConfidenceMode {
  /// c = mean member weight * min(T, N) / N, always in (0, 1].
  normalized_agreement,
  /// c = T. Unbounded; only useful for inspecting cluster sizes.
  raw_count,
};

inline std::string_view to_string(ConfidenceMode m) {
  return m == ConfidenceMode::raw_count ? "raw_count" : "normalized_agreement";
}

inline ConfidenceMode parse_confidence_mode(std::string_view s) {
  if (s == "normalized_agreement") return ConfidenceMode::normalized_agreement;
  if (s == "raw_count") return ConfidenceMode::raw_count;
  throw ValidationError("unknown confidence mode '" + std::string(s) +
                        "' (expected normalized_agreement or raw_count)");
}

struct FusionConfig {
  /// Boxes match when IoU is strictly greater than this.
  double match_iou_threshold = 0.4;
  /// N in the agreement formula. Unset means the number of declared annotators.
  std::optional<int> num_annotators;
  ConfidenceMode confidence_mode = ConfidenceMode::normalized_agreement;
};

/// Members of one cluster, all of a single category.
struct Cluster {
  std::vector<AnnotatedBox> members;
  std::vector<double> weights;
};

namespace detail {

inline void validate(const FusionConfig& config) {
  const double t = config.match_iou_threshold;
  if (!(t > 0.0 && t < 1.0)) {
    throw ValidationError("match IoU threshold must lie in (0, 1), got " + std::to_string(t));
  }
  if (config.num_annotators && *config.num_annotators < 1) {
    throw ValidationError("number of annotators must be >= 1");
  }
}

inline std::map<std::string, double, std::less<>> proficiency_table(
    std::span<const Annotator> annotators) {
  std::map<std::string, double, std::less<>> table;
  for (const Annotator& a : annotators) {
    if (!(a.proficiency > 0.0 && a.proficiency <= 1.0)) {
      throw ValidationError("annotator '" + a.id + "': proficiency must lie in (0, 1]");
    }
    if (!table.emplace(a.id, a.proficiency).second) {
      throw ValidationError("duplicate annotator id '" + a.id + "'");
    }
  }
  return table;
}

inline FusedBox summarize(const Cluster& cluster, int n_annotators, ConfidenceMode mode) {
  FusedBox fused;
  std::vector<Box> boxes;
  boxes.reserve(cluster.members.size());
  std::set<std::string> who;
  for (const AnnotatedBox& m : cluster.members) {
    boxes.push_back(m.box);
    who.insert(m.annotator);
  }
  fused.box = weighted_average(boxes, cluster.weights);
  fused.category = cluster.members.front().category;
  fused.cluster_size = static_cast<int>(cluster.members.size());
  fused.contributing_annotators.assign(who.begin(), who.end());

  const int t = fused.cluster_size;
  if (mode == ConfidenceMode::raw_count) {
    fused.confidence = t;
  } else {
    const double sum = std::accumulate(cluster.weights.begin(), cluster.weights.end(), 0.0);
    fused.confidence = (sum / t) * std::min(t, n_annotators) / n_annotators;
  }
  return fused;
}

}  // namespace detail

/// Greedy clustering step only. Returned clusters are in creation order.
inline std::vector<Cluster> cluster_boxes(std::span<const AnnotatedBox> annotations,
                                          std::span<const Annotator> annotators,
                                          double match_iou_threshold) {
  const auto proficiency = detail::proficiency_table(annotators);

  struct Pending {
    std::size_t index;
    double proficiency;
    double weight;
  };
  std::vector<Pending> order;
  order.reserve(annotations.size());
  for (std::size_t i = 0; i < annotations.size(); ++i) {
    const AnnotatedBox& a = annotations[i];
    const auto it = proficiency.find(a.annotator);
    if (it == proficiency.end()) {
      throw ValidationError("annotation " + std::to_string(i) + " references unknown annotator '" +
                            a.annotator + "'");
    }
    require_valid(a.box);
    const double w = a.weight.value_or(it->second);
    if (!(w > 0.0 && w <= 1.0)) {
      throw ValidationError("annotation " + std::to_string(i) + ": weight must lie in (0, 1]");
    }
    order.push_back({i, it->second, w});
  }
  std::stable_sort(order.begin(), order.end(), [&](const Pending& a, const Pending& b) {
    if (a.proficiency != b.proficiency) return a.proficiency > b.proficiency;
    const std::string& ia = annotations[a.index].annotator;
    const std::string& ib = annotations[b.index].annotator;
    if (ia != ib) return ia < ib;
    return a.index < b.index;
  });

  std::vector<Cluster> clusters;
  std::vector<Box> fused;
  for (const Pending& p : order) {
    const AnnotatedBox& a = annotations[p.index];
    std::optional<std::size_t> best;
    double best_iou = match_iou_threshold;
    for (std::size_t pos = 0; pos < fused.size(); ++pos) {
      if (clusters[pos].members.front().category != a.category) continue;
      const double overlap = iou(a.box, fused[pos]);
      if (overlap > best_iou) {
        best_iou = overlap;
        best = pos;
      }
    }
    if (!best) {
      clusters.push_back({{a}, {p.weight}});
      fused.push_back(a.box);
      continue;
    }
    Cluster& c = clusters[*best];
    c.members.push_back(a);
    c.weights.push_back(p.weight);
    std::vector<Box> boxes;
    boxes.reserve(c.members.size());
    for (const auto& m : c.members) boxes.push_back(m.box);
    fused[*best] = weighted_average(boxes, c.weights);
  }
  return clusters;
}

/// Fuses one image's annotations. `annotators` is the declared annotator set;
/// its size is N unless the config overrides it.
inline std::vector<FusedBox> fuse_image(std::span<const AnnotatedBox> annotations,
                                        std::span<const Annotator> annotators,
                                        const FusionConfig& config = {}) {
  detail::validate(config);
  const int n = config.num_annotators.value_or(static_cast<int>(annotators.size()));
  std::set<std::string_view> present;
  for (const auto& a : annotations) present.insert(a.annotator);
  if (n < static_cast<int>(present.size())) {
    throw ValidationError("number of annotators N=" + std::to_string(n) + " is smaller than the " +
                          std::to_string(present.size()) + " distinct annotators present");
  }
  if (annotations.empty()) {
    detail::proficiency_table(annotators);
    return {};
  }

  const auto clusters = cluster_boxes(annotations, annotators, config.match_iou_threshold);
  std::vector<FusedBox> out;
  out.reserve(clusters.size());
  for (const Cluster& c : clusters) out.push_back(detail::summarize(c, n, config.confidence_mode));
  return out;
}

/// Applies fuse_image to every scene independently. Output order and content
/// do not depend on `workers`.
inline SceneSet<FusedBox> fuse_dataset(const SceneSet<AnnotatedBox>& scenes,
                                       std::span<const Annotator> annotators,
                                       const FusionConfig& config = {}, unsigned workers = 1) {
  detail::validate(config);
  SceneSet<FusedBox> out(scenes.size());
  parallel_for(scenes.size(), workers, [&](std::size_t i) {
    const auto& in = scenes[i];
    try {
      out[i] = {in.image_id, in.width, in.height, fuse_image(in.items, annotators, config)};
    } catch (const ValidationError& e) {
      throw ValidationError("image '" + in.image_id + "': " + e.what());
    }
  });
  return out;
}

}  // namespace annofuse

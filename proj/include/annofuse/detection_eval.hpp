#pragma once

// mAP evaluation with 101-point interpolated average precision.
//
// A prediction is a true positive when it claims the still-unmatched
// same-category ground truth of highest IoU and that IoU is at least the
// threshold. Predictions are visited by descending score; equal scores keep
// input order. AP is pooled over all images per category and mAP averages
// the categories that have ground truth.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "annofuse/error.hpp"
#include "annofuse/geometry.hpp"
#include "annofuse/records.hpp"

namespace annofuse {

struct MatchResult {
  /// Indexed like the input predictions.
  std::vector<bool> true_positive;
  int false_negatives = 0;

  int true_positives() const {
    return static_cast<int>(std::count(true_positive.begin(), true_positive.end(), true));
  }
  int false_positives() const { return static_cast<int>(true_positive.size()) - true_positives(); }
};

/// Indices of `scores` by descending value, ties in input order.
inline std::vector<std::size_t> rank_by_score(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

inline void require_threshold(double t) {
  if (!(t > 0.0 && t <= 1.0)) {
    throw ValidationError("IoU threshold must lie in (0, 1], got " + std::to_string(t));
  }
}

inline MatchResult match_greedy(std::span<const ScoredBox> predictions,
                                std::span<const LabeledBox> truths, double iou_threshold) {
  require_threshold(iou_threshold);
  std::vector<double> scores;
  scores.reserve(predictions.size());
  for (const auto& p : predictions) scores.push_back(p.score);

  MatchResult result;
  result.true_positive.assign(predictions.size(), false);
  std::vector<bool> taken(truths.size(), false);
  for (std::size_t i : rank_by_score(scores)) {
    const ScoredBox& p = predictions[i];
    std::size_t best = truths.size();
    double best_iou = -1.0;
    for (std::size_t g = 0; g < truths.size(); ++g) {
      if (taken[g] || truths[g].category != p.category) continue;
      const double overlap = iou(p.box, truths[g].box);
      if (overlap > best_iou) {
        best_iou = overlap;
        best = g;
      }
    }
    if (best < truths.size() && best_iou >= iou_threshold) {
      taken[best] = true;
      result.true_positive[i] = true;
    }
  }
  result.false_negatives = static_cast<int>(std::count(taken.begin(), taken.end(), false));
  return result;
}

struct RankedOutcome {
  double score = 0.0;
  bool true_positive = false;
};

/// Mean over recall levels r = 0, 0.01, ..., 1 of the best precision reached
/// at any operating point with recall >= r (0 if none reaches r).
inline double average_precision(std::span<const RankedOutcome> outcomes, int num_truths) {
  if (num_truths < 1) throw ValidationError("average precision needs at least one ground truth");
  std::vector<double> scores;
  scores.reserve(outcomes.size());
  for (const auto& o : outcomes) scores.push_back(o.score);
  const auto order = rank_by_score(scores);

  // best[r] = max precision over points whose recall >= r / 100. Recall is
  // compared as 100 * tp >= r * n to stay exact.
  std::vector<double> best(101, 0.0);
  long tp = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (outcomes[order[k]].true_positive) ++tp;
    const double precision = static_cast<double>(tp) / static_cast<double>(k + 1);
    const long reachable = std::min<long>(100, (100 * tp) / num_truths);
    for (long r = 0; r <= reachable; ++r) best[r] = std::max(best[r], precision);
  }
  double sum = 0.0;
  for (double v : best) sum += v;
  return sum / 101.0;
}

struct CategoryResult {
  CategoryId category = 0;
  int num_truths = 0;
  int true_positives = 0;
  int false_positives = 0;
  /// Only meaningful when num_truths > 0.
  double ap = 0.0;
};

struct ThresholdResult {
  double iou_threshold = 0.0;
  std::vector<CategoryResult> categories;
  /// Mean AP over categories with ground truth; 0 if there are none.
  double map = 0.0;
  int true_positives = 0;
  int false_positives = 0;
  int false_negatives = 0;
};

struct EvalReport {
  std::vector<ThresholdResult> thresholds;
  /// Mean of the per-threshold mAPs.
  double mean_map = 0.0;
};

/// "0.4", "0.4,0.5" or "start:stop:step" (inclusive).
inline std::vector<double> parse_thresholds(std::string_view text) {
  auto number = [&](std::string_view s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size() || s.empty()) {
      throw ValidationError("bad threshold value '" + std::string(s) + "'");
    }
    return v;
  };
  auto snap = [](double v) { return std::round(v * 1e10) / 1e10; };
  std::vector<double> out;
  if (text.find(':') != std::string_view::npos) {
    std::vector<std::string_view> parts;
    for (std::size_t pos = 0;;) {
      const auto colon = text.find(':', pos);
      parts.push_back(text.substr(pos, colon - pos));
      if (colon == std::string_view::npos) break;
      pos = colon + 1;
    }
    if (parts.size() != 3) throw ValidationError("threshold range must be start:stop:step");
    const double start = number(parts[0]);
    const double stop = number(parts[1]);
    const double step = number(parts[2]);
    if (!(step > 0.0) || stop < start) throw ValidationError("threshold range is empty");
    const auto count = static_cast<long>(std::floor((stop - start) / step + 1e-9)) + 1;
    for (long k = 0; k < count; ++k) out.push_back(snap(start + static_cast<double>(k) * step));
  } else {
    for (std::size_t pos = 0;;) {
      const auto comma = text.find(',', pos);
      out.push_back(number(text.substr(pos, comma - pos)));
      if (comma == std::string_view::npos) break;
      pos = comma + 1;
    }
  }
  for (double t : out) require_threshold(t);
  return out;
}

/// Evaluates predictions against ground truth at each threshold. Predictions
/// may cover a subset of the images; their truths then count as misses.
inline EvalReport evaluate(const SceneSet<ScoredBox>& predictions, const SceneSet<LabeledBox>& truths,
                           std::span<const double> thresholds, std::span<const Category> categories) {
  if (thresholds.empty()) throw ValidationError("at least one IoU threshold is required");
  for (double t : thresholds) require_threshold(t);

  std::set<CategoryId> known;
  for (const auto& c : categories) known.insert(c.id);

  std::map<std::string, std::size_t, std::less<>> truth_index;
  std::map<CategoryId, int> truth_count;
  for (std::size_t s = 0; s < truths.size(); ++s) {
    if (!truth_index.emplace(truths[s].image_id, s).second) {
      throw ValidationError("duplicate ground-truth image '" + truths[s].image_id + "'");
    }
    for (const auto& g : truths[s].items) {
      if (!known.count(g.category)) {
        throw ValidationError("ground truth in image '" + truths[s].image_id +
                              "' uses unknown category " + std::to_string(g.category));
      }
      ++truth_count[g.category];
    }
  }
  std::set<std::string_view> seen;
  for (const auto& scene : predictions) {
    if (!truth_index.count(scene.image_id)) {
      throw ValidationError("predictions reference image '" + scene.image_id +
                            "' which has no ground-truth record");
    }
    if (!seen.insert(scene.image_id).second) {
      throw ValidationError("duplicate prediction image '" + scene.image_id + "'");
    }
    for (const auto& p : scene.items) {
      if (!known.count(p.category)) {
        throw ValidationError("prediction in image '" + scene.image_id + "' uses unknown category " +
                              std::to_string(p.category));
      }
      if (!(p.score >= 0.0 && p.score <= 1.0)) {
        throw ValidationError("prediction in image '" + scene.image_id + "' has score outside [0, 1]");
      }
    }
  }

  EvalReport report;
  for (double t : thresholds) {
    std::map<CategoryId, std::vector<RankedOutcome>> pooled;
    for (const auto& scene : predictions) {
      const auto& gt = truths[truth_index.find(scene.image_id)->second].items;
      const MatchResult m = match_greedy(scene.items, gt, t);
      for (std::size_t i = 0; i < scene.items.size(); ++i) {
        pooled[scene.items[i].category].push_back({scene.items[i].score, m.true_positive[i]});
      }
    }

    ThresholdResult tr;
    tr.iou_threshold = t;
    double ap_sum = 0.0;
    int with_truth = 0;
    for (CategoryId id : known) {
      CategoryResult cr;
      cr.category = id;
      cr.num_truths = truth_count.count(id) ? truth_count[id] : 0;
      const auto& outcomes = pooled[id];
      for (const auto& o : outcomes) (o.true_positive ? cr.true_positives : cr.false_positives)++;
      if (cr.num_truths > 0) {
        cr.ap = average_precision(outcomes, cr.num_truths);
        ap_sum += cr.ap;
        ++with_truth;
      }
      tr.true_positives += cr.true_positives;
      tr.false_positives += cr.false_positives;
      tr.false_negatives += cr.num_truths - cr.true_positives;
      tr.categories.push_back(cr);
    }
    tr.map = with_truth > 0 ? ap_sum / with_truth : 0.0;
    report.thresholds.push_back(std::move(tr));
  }
  double total = 0.0;
  for (const auto& tr : report.thresholds) total += tr.map;
  report.mean_map = total / static_cast<double>(report.thresholds.size());
  return report;
}

}  // namespace annofuse

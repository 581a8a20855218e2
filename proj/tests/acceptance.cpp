// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails. Tolerances and time budgets are fixed here.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iterator>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "annofuse/annofuse.hpp"
#include "generators.hpp"
#include "oracles.hpp"

using namespace annofuse;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool cond, const std::string& msg) {
    if (!cond && pass) {
      pass = false;
      detail = msg;
    }
  }
};

int failures = 0;

void criterion(int id, const char* name, double budget_seconds, const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail = std::string("exception: ") + e.what();
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (budget_seconds > 0 && secs > budget_seconds && o.pass) {
    o.pass = false;
    o.detail = "took " + std::to_string(secs) + " s, budget " + std::to_string(budget_seconds) + " s";
  }
  if (!o.pass) ++failures;
  std::printf("[%s] %d. %-40s %7.3f s%s%s\n", o.pass ? "PASS" : "FAIL", id, name, secs,
              o.detail.empty() ? "" : "  ", o.detail.c_str());
  std::fflush(stdout);
}

Outcome geometry_oracle() {
  Outcome o;
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> coord(0, 30);
  for (int trial = 0; trial < 1000; ++trial) {
    int v[8];
    for (int& x : v) x = coord(rng);
    const int ax1 = std::min(v[0], v[1]), ax2 = std::max(v[0], v[1]);
    const int ay1 = std::min(v[2], v[3]), ay2 = std::max(v[2], v[3]);
    const int bx1 = std::min(v[4], v[5]), bx2 = std::max(v[4], v[5]);
    const int by1 = std::min(v[6], v[7]), by2 = std::max(v[6], v[7]);
    const Box a{double(ax1), double(ay1), double(ax2), double(ay2)};
    const Box b{double(bx1), double(by1), double(bx2), double(by2)};
    const double expected = oracle::grid_iou(ax1, ay1, ax2, ay2, bx1, by1, bx2, by2);
    o.require(iou(a, b) == expected, "iou differs from grid oracle on " + to_string(a) + " vs " + to_string(b));
    o.require(iou(a, b) == iou(b, a), "iou not symmetric");
    if (area(a) > 0) o.require(iou(a, a) == 1.0, "self-IoU != 1 for " + to_string(a));
  }
  return o;
}

Outcome fusion_correctness() {
  Outcome o;
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + trial % 5;
    const auto inst = gen::separated_clusters(rng, n, 1 + trial % 8);
    FusionConfig cfg;
    cfg.match_iou_threshold = 0.4;
    const auto fused = fuse_image(inst.annotations, inst.annotators, cfg);
    o.require(fused.size() == inst.groups.size(), "cluster count mismatch in trial " + std::to_string(trial));
    if (!o.pass) break;
    std::map<std::string, double> prof;
    for (const auto& a : inst.annotators) prof[a.id] = a.proficiency;
    for (const auto& group : inst.groups) {
      // Expected fused box: proficiency-weighted mean of the group.
      double sw = 0, x1 = 0, y1 = 0, x2 = 0, y2 = 0;
      for (auto idx : group) {
        const auto& a = inst.annotations[idx];
        const double w = prof[a.annotator];
        sw += w;
        x1 += w * a.box.x1, y1 += w * a.box.y1, x2 += w * a.box.x2, y2 += w * a.box.y2;
      }
      const Box expected{x1 / sw, y1 / sw, x2 / sw, y2 / sw};
      const FusedBox* match = nullptr;
      for (const auto& f : fused) {
        if (iou(f.box, expected) > 0.5) match = &f;
      }
      o.require(match != nullptr, "no fused box for a group");
      if (!match) break;
      const int t = static_cast<int>(group.size());
      o.require(match->cluster_size == t, "cluster size mismatch");
      o.require(std::abs(match->box.x1 - expected.x1) <= 1e-9 && std::abs(match->box.y1 - expected.y1) <= 1e-9 &&
                    std::abs(match->box.x2 - expected.x2) <= 1e-9 && std::abs(match->box.y2 - expected.y2) <= 1e-9,
                "fused coordinates differ from weighted mean");
      const double c = (sw / t) * std::min(t, n) / n;
      o.require(std::abs(match->confidence - c) <= 1e-12, "confidence differs from formula");
    }
  }
  return o;
}

Outcome fusion_determinism() {
  Outcome o;
  SimConfig sc;
  sc.num_scenes = 1000;
  sc.seed = 31;
  const auto sim = generate_dataset(sc, 4);
  const auto scenes = sim.merged_annotations();
  auto serialize = [&](unsigned workers) {
    DatasetFile f;
    f.categories = sim.categories;
    f.annotators = sim.annotators;
    f.scenes = fuse_dataset(scenes, sim.annotators, {}, workers);
    return write_string(f);
  };
  const std::string reference = serialize(1);
  for (int rep = 0; rep < 5; ++rep) o.require(serialize(1) == reference, "repeat run differs");
  o.require(serialize(8) == reference, "8-worker output differs from 1-worker output");
  return o;
}

Outcome map_oracle() {
  Outcome o;
  std::mt19937_64 rng(4);
  const std::vector<double> at04{0.4};
  const auto range = parse_thresholds("0.5:0.95:0.05");
  for (int trial = 0; trial < 100; ++trial) {
    const auto inst = gen::small_eval_instance(rng, 20, 5);
    std::vector<int> ids;
    for (const auto& c : inst.categories) ids.push_back(c.id);
    const auto r04 = evaluate(inst.predictions, inst.truths, at04, inst.categories);
    o.require(std::abs(r04.mean_map - oracle::brute_map(inst.predictions, inst.truths, 0.4, ids)) <= 1e-12,
              "mAP@0.4 differs from brute force in trial " + std::to_string(trial));
    const auto rr = evaluate(inst.predictions, inst.truths, range, inst.categories);
    double brute_mean = 0.0;
    for (double t : range) brute_mean += oracle::brute_map(inst.predictions, inst.truths, t, ids);
    brute_mean /= static_cast<double>(range.size());
    o.require(std::abs(rr.mean_map - brute_mean) <= 1e-12,
              "mAP@[0.5:0.95] differs from brute force in trial " + std::to_string(trial));
  }
  return o;
}

Outcome earl_algebra() {
  Outcome o;
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> classes(1, 8);
  std::uniform_real_distribution<double> u(0, 1), off(-4, 4), beta(0.05, 10), eta(0.01, 0.99), conf(1e-4, 1);
  for (int trial = 0; trial < 1000; ++trial) {
    LossInputs in;
    const int k = classes(rng);
    double sum = 0;
    for (int i = 0; i < k; ++i) sum += in.class_probs.emplace_back(u(rng) + 1e-4);
    for (double& p : in.class_probs) p /= sum;
    in.true_class = std::uniform_int_distribution<std::size_t>(0, k - 1)(rng);
    for (int i = 0; i < 4; ++i) in.predicted_offsets[i] = off(rng), in.target_offsets[i] = off(rng);
    in.anchor_gt_iou = u(rng);
    in.beta = beta(rng);
    in.eta = eta(rng);
    in.confidence = conf(rng);
    const double weighted = earl_loss(in);
    const double base = base_loss(in);
    o.require(std::abs(weighted - in.confidence * base) <= 1e-12 * std::max(1.0, std::abs(weighted)),
              "earl != c * base");
    LossInputs unit = in;
    unit.confidence = 1.0;
    o.require(earl_loss(unit) == base_loss(unit), "c = 1 does not reduce to the base loss");
    o.require(objectness_indicator(in.eta, in.eta) == 0, "indicator not strict at IoU = eta");
    LossInputs at_eta = in;
    at_eta.anchor_gt_iou = at_eta.eta;
    o.require(base_loss(at_eta) == CrossEntropy{}(at_eta.class_probs, at_eta.true_class),
              "localization not gated at IoU = eta");
  }
  const CrossEntropy ce;
  for (double p : {0.3, 0.7}) {
    auto f = [&](double x) {
      const std::vector<double> probs{x, 1 - x};
      return ce(probs, 0);
    };
    const std::vector<double> probs{p, 1 - p};
    const double analytic = ce.derivative(probs, 0);
    const double numeric = oracle::central_difference(f, p, 1e-5);
    o.require(std::abs(numeric - analytic) <= 1e-6 * std::abs(analytic), "gradient mismatch at p = " + std::to_string(p));
  }
  return o;
}

Outcome simulation_statistics() {
  Outcome o;
  SimConfig sc;  // R = 3, p = 0.8, sigma = 0.05
  sc.num_experts = 3;
  sc.proficiency = 0.8;
  sc.diag_stddev = 0.05;
  sc.seed = 6;
  // Enough scenes for at least 10,000 ground-truth objects.
  sc.num_scenes = 3500;
  const auto sim = generate_dataset(sc, 4);
  for (const auto& m : sim.matrices) {
    for (int i = 0; i < m.num_categories(); ++i) {
      double sum = 0;
      for (int j = 0; j <= m.num_categories(); ++j) sum += m.at(i, j);
      o.require(std::abs(sum - 1.0) <= 1e-9, "row does not sum to 1");
      o.require(m.at(i, i) >= 0.5 && m.at(i, i) <= 1.0, "diagonal outside [0.5, 1]");
    }
    o.require(m.is_valid(), "matrix invariants violated");
  }
  long objects = 0, agree = 0, reports = 0;
  for (std::size_t s = 0; s < sim.truth.size(); ++s) {
    const auto& truth = sim.truth[s].items;
    objects += static_cast<long>(truth.size());
    for (const auto& expert : sim.experts) {
      for (const auto& a : expert[s].items) {
        ++reports;
        int owners = 0;
        for (const auto& g : truth) {
          if (iou(a.box, g.box) > 0.8) {
            ++owners;
            agree += a.category == g.category;
          }
        }
        o.require(owners == 1, "jittered box without IoU > 0.8 to exactly one truth");
      }
    }
  }
  o.require(objects >= 10000, "only " + std::to_string(objects) + " objects simulated");
  const double rate = static_cast<double>(agree) / static_cast<double>(objects * sc.num_experts);
  o.require(rate >= 0.77 && rate <= 0.83, "agreement rate " + std::to_string(rate) + " outside [0.77, 0.83]");
  if (o.pass) {
    o.detail = "objects=" + std::to_string(objects) + " agreement=" + std::to_string(rate);
  }
  return o;
}

Outcome fusion_beats_individuals() {
  Outcome o;
  std::string summary;
  const std::vector<double> at04{0.4};
  for (std::uint64_t seed : {101, 202, 303, 404, 505}) {
    SimConfig sc;
    sc.num_scenes = 1000;
    sc.num_experts = 3;
    sc.proficiency = 0.8;
    sc.seed = seed;
    const auto sim = generate_dataset(sc, 4);
    const auto fused = fuse_dataset(sim.merged_annotations(), sim.annotators, {}, 4);

    SceneSet<ScoredBox> fused_pred;
    for (const auto& s : fused) {
      Scene<ScoredBox> p{s.image_id, s.width, s.height, {}};
      for (const auto& f : s.items) p.items.push_back({f.box, f.category, f.confidence});
      fused_pred.push_back(std::move(p));
    }
    const double fused_map = evaluate(fused_pred, sim.truth, at04, sim.categories).mean_map;
    char buf[160];
    std::snprintf(buf, sizeof buf, " seed %llu: fused %.3f", static_cast<unsigned long long>(seed), fused_map);
    summary += buf;
    for (std::size_t k = 0; k < sim.experts.size(); ++k) {
      SceneSet<ScoredBox> pred;
      for (const auto& s : sim.experts[k]) {
        Scene<ScoredBox> p{s.image_id, s.width, s.height, {}};
        for (const auto& a : s.items) p.items.push_back({a.box, a.category, 1.0});
        pred.push_back(std::move(p));
      }
      const double m = evaluate(pred, sim.truth, at04, sim.categories).mean_map;
      std::snprintf(buf, sizeof buf, " e%zu %.3f", k + 1, m);
      summary += buf;
      o.require(fused_map > m, "seed " + std::to_string(seed) + ": fused mAP not above expert " + std::to_string(k + 1));
    }
  }
  if (o.pass) o.detail = summary;
  return o;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome io_robustness() {
  Outcome o;
  const std::string dir = ANNOFUSE_GOLDEN_DIR;
  std::vector<std::string> datasets;
  for (const char* name : {"ground_truth.json", "multi_annotator.json", "fused.json", "predictions.json"}) {
    const std::string text = slurp(dir + "/" + name);
    o.require(!text.empty(), std::string("missing golden file ") + name);
    o.require(write_string(parse_string(text)) == text, std::string("round trip not byte-stable: ") + name);
    datasets.push_back(text);
  }
  {
    const std::string text = slurp(dir + "/loss_weights.json");
    std::istringstream in(text);
    std::ostringstream out;
    write(parse_weights(in), out);
    o.require(out.str() == text, "loss_weights round trip not byte-stable");
  }

  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> byte(0, 255), edits(1, 8), op(0, 2);
  long structured = 0, accepted = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    std::string text = datasets[trial % datasets.size()];
    for (int e = edits(rng); e > 0 && !text.empty(); --e) {
      const std::size_t pos = std::uniform_int_distribution<std::size_t>(0, text.size() - 1)(rng);
      switch (op(rng)) {
        case 0: text[pos] = static_cast<char>(byte(rng)); break;
        case 1: text.erase(pos, 1); break;
        default: text.insert(pos, 1, static_cast<char>(byte(rng))); break;
      }
    }
    try {
      const DatasetFile f = parse_string(text);
      ++accepted;
      // Anything accepted must serialize and re-parse to the same value.
      if (!(parse_string(write_string(f)) == f)) o.require(false, "accepted mutant does not round-trip");
    } catch (const ValidationError&) {
      ++structured;
    } catch (const std::exception& e) {
      o.require(false, std::string("unstructured exception: ") + e.what());
    }
  }
  if (o.pass) o.detail = "mutants rejected=" + std::to_string(structured) + " accepted=" + std::to_string(accepted);
  return o;
}

}  // namespace

int main() {
  criterion(1, "geometry oracle", 1.0, geometry_oracle);
  criterion(2, "fusion correctness", 1.0, fusion_correctness);
  criterion(3, "fusion determinism", 0.0, fusion_determinism);
  criterion(4, "mAP oracle equivalence", 5.0, map_oracle);
  criterion(5, "EARL algebra", 0.0, earl_algebra);
  criterion(6, "simulation statistics", 10.0, simulation_statistics);
  criterion(7, "fusion beats individual experts", 30.0, fusion_beats_individuals);
  criterion(8, "I/O robustness", 0.0, io_robustness);
  std::printf("%s: %d criteria failed\n", failures ? "FAILED" : "OK", failures);
  return failures ? 1 : 0;
}

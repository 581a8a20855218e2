#pragma once

// JSON dataset files.
//
// Every file is an object with "format_version": 1 and a "kind" tag:
//   ground_truth | multi_annotator | fused | predictions   (annotation datasets)
//   loss_weights                                           (per-box training weights)
//   transition_matrices                                    (simulated expert confusion)
//   eval_report                                            (evaluation output, write-only)
//
// Boxes are stored in corner form [x1, y1, x2, y2]. Writers emit keys in a
// fixed order, one record per line, images sorted by id and annotations
// grouped by image in input order, with shortest round-trip number
// formatting, so equal values always produce equal bytes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <iterator>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "annofuse/annotator_sim.hpp"
#include "annofuse/detection_eval.hpp"
#include "annofuse/earl_loss.hpp"
#include "annofuse/error.hpp"
#include "annofuse/records.hpp"
#include "annofuse/wbf_fusion.hpp"

namespace annofuse {

inline constexpr int kFormatVersion = 1;

enum class DatasetKind { ground_truth, multi_annotator, fused, predictions };

inline std::string_view to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::ground_truth: return "ground_truth";
    case DatasetKind::multi_annotator: return "multi_annotator";
    case DatasetKind::fused: return "fused";
    case DatasetKind::predictions: return "predictions";
  }
  return "?";
}

inline std::optional<DatasetKind> dataset_kind_from_string(std::string_view s) {
  for (auto k : {DatasetKind::ground_truth, DatasetKind::multi_annotator, DatasetKind::fused,
                 DatasetKind::predictions}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

template <DatasetKind K> struct ItemFor;
template <> struct ItemFor<DatasetKind::ground_truth> { using type = LabeledBox; };
template <> struct ItemFor<DatasetKind::multi_annotator> { using type = AnnotatedBox; };
template <> struct ItemFor<DatasetKind::fused> { using type = FusedBox; };
template <> struct ItemFor<DatasetKind::predictions> { using type = ScoredBox; };

/// In-memory form of an annotation dataset file. The scene variant's
/// alternative determines the kind.
struct DatasetFile {
  std::vector<Category> categories;
  std::vector<Annotator> annotators;
  /// Only meaningful for fused files.
  ConfidenceMode confidence_mode = ConfidenceMode::normalized_agreement;
  std::variant<SceneSet<LabeledBox>, SceneSet<AnnotatedBox>, SceneSet<FusedBox>, SceneSet<ScoredBox>>
      scenes;

  DatasetKind kind() const { return static_cast<DatasetKind>(scenes.index()); }

  template <class Item>
  const SceneSet<Item>& scenes_as() const {
    if (const auto* s = std::get_if<SceneSet<Item>>(&scenes)) return *s;
    throw KindError("dataset has kind " + std::string(to_string(kind())));
  }
  template <class Item>
  SceneSet<Item>& scenes_as() {
    if (auto* s = std::get_if<SceneSet<Item>>(&scenes)) return *s;
    throw KindError("dataset has kind " + std::string(to_string(kind())));
  }

  std::size_t num_images() const {
    return std::visit([](const auto& s) { return s.size(); }, scenes);
  }

  friend bool operator==(const DatasetFile&, const DatasetFile&) = default;
};

/// Non-fatal findings from parsing, such as boxes clipped to the image.
struct Diagnostics {
  std::vector<std::string> warnings;
};

enum class BoxDialect { corner_form, width_height_form };

inline BoxDialect parse_box_dialect(std::string_view s) {
  if (s == "corner_form") return BoxDialect::corner_form;
  if (s == "width_height_form") return BoxDialect::width_height_form;
  throw ValidationError("unknown box dialect '" + std::string(s) +
                        "' (expected corner_form or width_height_form)");
}

namespace detail {

using json = nlohmann::ordered_json;

[[noreturn]] inline void invalid(const std::string& where, const std::string& what) {
  throw ValidationError(where + ": " + what);
}

inline const json& member(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object()) invalid(where, "expected an object");
  const auto it = obj.find(key);
  if (it == obj.end()) invalid(where, std::string("missing field '") + key + "'");
  return *it;
}

inline const json* optional_member(const json& obj, const char* key) {
  const auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

inline double as_number(const json& v, const std::string& where) {
  if (!v.is_number()) invalid(where, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) invalid(where, "number is not finite");
  return d;
}

inline std::int64_t as_integer(const json& v, const std::string& where, std::int64_t lo,
                               std::int64_t hi) {
  std::int64_t out = 0;
  if (v.is_number_unsigned()) {
    const auto u = v.get<std::uint64_t>();
    if (u > static_cast<std::uint64_t>(hi)) invalid(where, "integer out of range");
    out = static_cast<std::int64_t>(u);
  } else if (v.is_number_integer()) {
    out = v.get<std::int64_t>();
  } else {
    invalid(where, "expected an integer");
  }
  if (out < lo || out > hi) invalid(where, "integer out of range");
  return out;
}

inline std::string as_string(const json& v, const std::string& where) {
  if (!v.is_string()) invalid(where, "expected a string");
  return v.get<std::string>();
}

inline std::string as_id(const json& v, const std::string& where) {
  std::string s = as_string(v, where);
  if (s.empty()) invalid(where, "id must not be empty");
  return s;
}

inline const json& as_array(const json& v, const std::string& where) {
  if (!v.is_array()) invalid(where, "expected an array");
  return v;
}

inline Box as_box(const json& v, const std::string& where) {
  as_array(v, where);
  if (v.size() != 4) invalid(where, "bbox must have 4 numbers");
  Box b{as_number(v[0], where), as_number(v[1], where), as_number(v[2], where),
        as_number(v[3], where)};
  if (!is_valid(b)) invalid(where, "bbox " + to_string(b) + " has negative extent");
  return b;
}

inline json box_json(const Box& b) { return json::array({b.x1, b.y1, b.x2, b.y2}); }

inline void warn_unknown_keys(const json& obj, std::initializer_list<std::string_view> allowed,
                              const std::string& where, Diagnostics* diag) {
  if (!diag) return;
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end()) {
      diag->warnings.push_back(where + ": ignoring unknown field '" + it.key() + "'");
    }
  }
}

inline void check_header(const json& root, std::string_view expected_kind) {
  if (!root.is_object()) invalid("document", "top level must be an object");
  const auto version = as_integer(member(root, "format_version", "document"), "format_version", 0,
                                  std::numeric_limits<int>::max());
  if (version != kFormatVersion) {
    invalid("format_version", "unsupported version " + std::to_string(version));
  }
  const std::string kind = as_string(member(root, "kind", "document"), "kind");
  if (kind != expected_kind) {
    throw KindError("expected kind '" + std::string(expected_kind) + "' but file declares '" + kind + "'");
  }
}

inline json read_json(std::istream& in) {
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what(), e.byte);
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what(), 0);
  }
}

/// Clips a box that overflows its image by at most 1 px; anything worse is an error.
inline Box fit_to_image(Box b, double width, double height, const std::string& where,
                        Diagnostics* diag) {
  const double overflow = std::max({-b.x1, -b.y1, b.x2 - width, b.y2 - height});
  if (overflow <= 0.0) return b;
  if (overflow > 1.0) {
    invalid(where, "bbox " + to_string(b) + " exceeds image bounds by more than 1 px");
  }
  b.x1 = std::clamp(b.x1, 0.0, width);
  b.x2 = std::clamp(b.x2, 0.0, width);
  b.y1 = std::clamp(b.y1, 0.0, height);
  b.y2 = std::clamp(b.y2, 0.0, height);
  if (diag) diag->warnings.push_back(where + ": bbox clipped to image bounds");
  return b;
}

struct Header {
  std::vector<Category> categories;
  std::vector<Annotator> annotators;
  std::set<CategoryId> category_ids;
  std::set<std::string, std::less<>> annotator_ids;
};

inline Header parse_header_tables(const json& root, Diagnostics* diag) {
  Header h;
  const json& cats = as_array(member(root, "categories", "document"), "categories");
  for (std::size_t i = 0; i < cats.size(); ++i) {
    const std::string where = "categories[" + std::to_string(i) + "]";
    warn_unknown_keys(cats[i], {"id", "name"}, where, diag);
    Category c;
    c.id = static_cast<CategoryId>(as_integer(member(cats[i], "id", where), where + ".id",
                                              std::numeric_limits<int>::min(),
                                              std::numeric_limits<int>::max()));
    c.name = as_string(member(cats[i], "name", where), where + ".name");
    if (!h.category_ids.insert(c.id).second) invalid(where, "duplicate category id " + std::to_string(c.id));
    h.categories.push_back(std::move(c));
  }
  if (const json* anns = optional_member(root, "annotators")) {
    as_array(*anns, "annotators");
    for (std::size_t i = 0; i < anns->size(); ++i) {
      const std::string where = "annotators[" + std::to_string(i) + "]";
      const json& a = (*anns)[i];
      warn_unknown_keys(a, {"id", "proficiency"}, where, diag);
      Annotator ann;
      ann.id = as_id(member(a, "id", where), where + ".id");
      if (const json* p = a.is_object() ? optional_member(a, "proficiency") : nullptr) {
        ann.proficiency = as_number(*p, where + ".proficiency");
      }
      if (!(ann.proficiency > 0.0 && ann.proficiency <= 1.0)) {
        invalid(where, "proficiency must lie in (0, 1]");
      }
      if (!h.annotator_ids.insert(ann.id).second) invalid(where, "duplicate annotator id '" + ann.id + "'");
      h.annotators.push_back(std::move(ann));
    }
  }
  return h;
}

template <class Item>
Item parse_item(const json& a, const Box& box, CategoryId category, const Header& h,
                ConfidenceMode mode, const std::string& where, Diagnostics* diag) {
  if constexpr (std::is_same_v<Item, LabeledBox>) {
    warn_unknown_keys(a, {"image_id", "category_id", "bbox"}, where, diag);
    return {box, category};
  } else if constexpr (std::is_same_v<Item, AnnotatedBox>) {
    warn_unknown_keys(a, {"image_id", "category_id", "bbox", "annotator_id", "weight"}, where, diag);
    AnnotatedBox out{box, category, as_id(member(a, "annotator_id", where), where + ".annotator_id"), {}};
    if (!h.annotator_ids.count(out.annotator)) invalid(where, "unknown annotator '" + out.annotator + "'");
    if (const json* w = optional_member(a, "weight")) {
      const double v = as_number(*w, where + ".weight");
      if (!(v > 0.0 && v <= 1.0)) invalid(where, "weight must lie in (0, 1]");
      out.weight = v;
    }
    return out;
  } else if constexpr (std::is_same_v<Item, FusedBox>) {
    warn_unknown_keys(a, {"image_id", "category_id", "bbox", "confidence", "cluster_size", "contributors"},
                      where, diag);
    FusedBox out;
    out.box = box;
    out.category = category;
    out.confidence = as_number(member(a, "confidence", where), where + ".confidence");
    out.cluster_size = 1;
    if (const json* t = optional_member(a, "cluster_size")) {
      out.cluster_size = static_cast<int>(as_integer(*t, where + ".cluster_size", 1, std::numeric_limits<int>::max()));
    }
    if (mode == ConfidenceMode::normalized_agreement) {
      if (!(out.confidence > 0.0 && out.confidence <= 1.0)) invalid(where, "confidence must lie in (0, 1]");
    } else if (out.confidence != static_cast<double>(out.cluster_size)) {
      invalid(where, "raw_count confidence must equal cluster_size");
    }
    if (const json* who = optional_member(a, "contributors")) {
      as_array(*who, where + ".contributors");
      for (const json& id : *who) out.contributing_annotators.push_back(as_id(id, where + ".contributors"));
      if (!std::is_sorted(out.contributing_annotators.begin(), out.contributing_annotators.end()) ||
          std::adjacent_find(out.contributing_annotators.begin(), out.contributing_annotators.end()) !=
              out.contributing_annotators.end()) {
        invalid(where, "contributors must be sorted and unique");
      }
      if (!h.annotators.empty()) {
        for (const auto& id : out.contributing_annotators) {
          if (!h.annotator_ids.count(id)) invalid(where, "unknown contributor '" + id + "'");
        }
      }
    }
    return out;
  } else {
    warn_unknown_keys(a, {"image_id", "category_id", "bbox", "score"}, where, diag);
    const double score = as_number(member(a, "score", where), where + ".score");
    if (!(score >= 0.0 && score <= 1.0)) invalid(where, "score must lie in [0, 1]");
    return {box, category, score};
  }
}

template <class Item>
json item_json(const std::string& image_id, const Item& item) {
  json a;
  a["image_id"] = image_id;
  a["category_id"] = item.category;
  a["bbox"] = box_json(item.box);
  if constexpr (std::is_same_v<Item, AnnotatedBox>) {
    a["annotator_id"] = item.annotator;
    if (item.weight) a["weight"] = *item.weight;
  } else if constexpr (std::is_same_v<Item, FusedBox>) {
    a["confidence"] = item.confidence;
    a["cluster_size"] = item.cluster_size;
    a["contributors"] = item.contributing_annotators;
  } else if constexpr (std::is_same_v<Item, ScoredBox>) {
    a["score"] = item.score;
  }
  return a;
}

template <class Item>
SceneSet<Item> parse_scenes(const json& root, const Header& h, ConfidenceMode mode, Diagnostics* diag) {
  SceneSet<Item> scenes;
  std::map<std::string, std::size_t, std::less<>> index;
  const json& images = as_array(member(root, "images", "document"), "images");
  for (std::size_t i = 0; i < images.size(); ++i) {
    const std::string where = "images[" + std::to_string(i) + "]";
    warn_unknown_keys(images[i], {"id", "width", "height"}, where, diag);
    Scene<Item> s;
    s.image_id = as_id(member(images[i], "id", where), where + ".id");
    s.width = as_number(member(images[i], "width", where), where + ".width");
    s.height = as_number(member(images[i], "height", where), where + ".height");
    if (!(s.width > 0.0 && s.height > 0.0)) invalid(where, "image size must be positive");
    if (!index.emplace(s.image_id, i).second) invalid(where, "duplicate image id '" + s.image_id + "'");
    scenes.push_back(std::move(s));
  }
  const json& anns = as_array(member(root, "annotations", "document"), "annotations");
  for (std::size_t i = 0; i < anns.size(); ++i) {
    const std::string where = "annotations[" + std::to_string(i) + "]";
    const json& a = anns[i];
    const std::string image = as_id(member(a, "image_id", where), where + ".image_id");
    const auto it = index.find(image);
    if (it == index.end()) invalid(where, "unknown image '" + image + "'");
    const auto category = static_cast<CategoryId>(
        as_integer(member(a, "category_id", where), where + ".category_id",
                   std::numeric_limits<int>::min(), std::numeric_limits<int>::max()));
    if (!h.category_ids.count(category)) invalid(where, "unknown category " + std::to_string(category));
    Scene<Item>& scene = scenes[it->second];
    const Box box = fit_to_image(as_box(member(a, "bbox", where), where + ".bbox"), scene.width,
                                 scene.height, where, diag);
    scene.items.push_back(parse_item<Item>(a, box, category, h, mode, where, diag));
  }
  return scenes;
}

inline DatasetFile dataset_from_json(const json& root, std::optional<DatasetKind> expected,
                                     Diagnostics* diag) {
  if (!root.is_object()) invalid("document", "top level must be an object");
  const std::string kind_text = as_string(member(root, "kind", "document"), "kind");
  const auto kind = dataset_kind_from_string(kind_text);
  if (!kind) throw KindError("unknown dataset kind '" + kind_text + "'");
  if (expected && *expected != *kind) {
    throw KindError("expected a " + std::string(to_string(*expected)) + " file but found kind '" +
                    kind_text + "'");
  }
  check_header(root, kind_text);
  warn_unknown_keys(root,
                    {"format_version", "kind", "confidence_mode", "categories", "annotators", "images",
                     "annotations"},
                    "document", diag);

  DatasetFile out;
  Header h = parse_header_tables(root, diag);
  if (*kind == DatasetKind::multi_annotator && !optional_member(root, "annotators")) {
    invalid("document", "multi_annotator files require an 'annotators' table");
  }
  if (const json* mode = optional_member(root, "confidence_mode")) {
    if (*kind != DatasetKind::fused) invalid("confidence_mode", "only valid for fused files");
    out.confidence_mode = parse_confidence_mode(as_string(*mode, "confidence_mode"));
  }
  switch (*kind) {
    case DatasetKind::ground_truth:
      out.scenes = parse_scenes<LabeledBox>(root, h, out.confidence_mode, diag);
      break;
    case DatasetKind::multi_annotator:
      out.scenes = parse_scenes<AnnotatedBox>(root, h, out.confidence_mode, diag);
      break;
    case DatasetKind::fused:
      out.scenes = parse_scenes<FusedBox>(root, h, out.confidence_mode, diag);
      break;
    case DatasetKind::predictions:
      out.scenes = parse_scenes<ScoredBox>(root, h, out.confidence_mode, diag);
      break;
  }
  out.categories = std::move(h.categories);
  out.annotators = std::move(h.annotators);
  return out;
}

/// Writes `root` as a JSON object with one line per top-level key and one
/// line per element of the listed array keys.
inline void write_lines(std::ostream& out, const json& root,
                        std::initializer_list<std::string_view> array_keys) {
  out << "{\n";
  std::size_t i = 0;
  for (auto it = root.begin(); it != root.end(); ++it, ++i) {
    out << "  " << json(it.key()).dump() << ": ";
    const bool expand = std::find(array_keys.begin(), array_keys.end(), it.key()) != array_keys.end();
    if (expand && it->is_array() && !it->empty()) {
      out << "[\n";
      for (std::size_t k = 0; k < it->size(); ++k) {
        out << "    " << (*it)[k].dump() << (k + 1 < it->size() ? ",\n" : "\n");
      }
      out << "  ]";
    } else {
      out << it->dump();
    }
    out << (i + 1 < root.size() ? ",\n" : "\n");
  }
  out << "}\n";
  if (!out) throw IoError("failed writing output stream");
}

inline std::ifstream open_for_read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return in;
}

template <class WriteFn>
void write_to_path(const std::string& path, WriteFn&& fn) {
  // Serialize fully first so a validation failure leaves no partial file.
  std::ostringstream buffer;
  fn(buffer);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << buffer.str();
  out.flush();
  if (!out) throw IoError("failed writing '" + path + "'");
}

}  // namespace detail

/// Builds the canonical JSON document for `data`.
inline nlohmann::ordered_json to_json(const DatasetFile& data) {
  using detail::json;
  json root;
  root["format_version"] = kFormatVersion;
  root["kind"] = std::string(to_string(data.kind()));
  if (data.kind() == DatasetKind::fused) root["confidence_mode"] = std::string(to_string(data.confidence_mode));
  json cats = json::array();
  for (const auto& c : data.categories) cats.push_back(json{{"id", c.id}, {"name", c.name}});
  root["categories"] = std::move(cats);
  if (!data.annotators.empty() || data.kind() == DatasetKind::multi_annotator) {
    json anns = json::array();
    for (const auto& a : data.annotators) anns.push_back(json{{"id", a.id}, {"proficiency", a.proficiency}});
    root["annotators"] = std::move(anns);
  }
  std::visit(
      [&](const auto& scenes) {
        std::vector<std::size_t> order(scenes.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
          return scenes[a].image_id < scenes[b].image_id;
        });
        json images = json::array();
        json anns = json::array();
        for (std::size_t i : order) {
          const auto& s = scenes[i];
          images.push_back(json{{"id", s.image_id}, {"width", s.width}, {"height", s.height}});
          for (const auto& item : s.items) anns.push_back(detail::item_json(s.image_id, item));
        }
        root["images"] = std::move(images);
        root["annotations"] = std::move(anns);
      },
      data.scenes);
  return root;
}

inline DatasetFile from_json(const nlohmann::ordered_json& root,
                             std::optional<DatasetKind> expected = std::nullopt,
                             Diagnostics* diag = nullptr) {
  try {
    return detail::dataset_from_json(root, expected, diag);
  } catch (const nlohmann::ordered_json::exception& e) {
    throw ValidationError(std::string("invalid dataset: ") + e.what());
  }
}

inline DatasetFile parse(std::istream& in, std::optional<DatasetKind> expected = std::nullopt,
                         Diagnostics* diag = nullptr) {
  return from_json(detail::read_json(in), expected, diag);
}

inline DatasetFile parse_string(std::string_view text, std::optional<DatasetKind> expected = std::nullopt,
                                Diagnostics* diag = nullptr) {
  std::istringstream in{std::string(text)};
  return parse(in, expected, diag);
}

inline DatasetFile parse_file(const std::string& path, std::optional<DatasetKind> expected = std::nullopt,
                              Diagnostics* diag = nullptr) {
  auto in = detail::open_for_read(path);
  try {
    return parse(in, expected, diag);
  } catch (const KindError& e) {
    throw KindError(path + ": " + e.what());
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what(), e.byte_offset());
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

/// Canonical serialization. The dataset is validated first; invalid data
/// throws ValidationError and nothing is written.
inline void write(const DatasetFile& data, std::ostream& out) {
  const auto root = to_json(data);
  from_json(root, data.kind());
  detail::write_lines(out, root, {"categories", "annotators", "images", "annotations"});
}

inline std::string write_string(const DatasetFile& data) {
  std::ostringstream out;
  write(data, out);
  return out.str();
}

inline void write_file(const DatasetFile& data, const std::string& path) {
  detail::write_to_path(path, [&](std::ostream& out) { write(data, out); });
}

/// Reads a foreign file with the same layout but looser conventions: numeric
/// image/annotator ids become strings, format_version may be absent, and
/// boxes may be [x, y, w, h]. `kind` overrides or supplies the kind tag.
inline DatasetFile convert_external(std::istream& in, BoxDialect dialect,
                                    std::optional<DatasetKind> kind = std::nullopt,
                                    Diagnostics* diag = nullptr) {
  using detail::json;
  json root = detail::read_json(in);
  if (!root.is_object()) detail::invalid("document", "top level must be an object");
  if (!root.contains("format_version")) root["format_version"] = kFormatVersion;
  if (kind) root["kind"] = std::string(to_string(*kind));

  auto stringify = [](json& v) {
    if (v.is_number_integer() || v.is_number_unsigned()) v = v.dump();
  };
  for (const char* table : {"images", "annotators"}) {
    if (auto it = root.find(table); it != root.end() && it->is_array()) {
      for (json& rec : *it) {
        if (rec.is_object() && rec.contains("id")) stringify(rec["id"]);
      }
    }
  }
  if (auto it = root.find("annotations"); it != root.end() && it->is_array()) {
    for (std::size_t i = 0; i < it->size(); ++i) {
      json& rec = (*it)[i];
      if (!rec.is_object()) continue;
      for (const char* key : {"image_id", "annotator_id"}) {
        if (rec.contains(key)) stringify(rec[key]);
      }
      if (dialect == BoxDialect::width_height_form && rec.contains("bbox")) {
        const std::string where = "annotations[" + std::to_string(i) + "].bbox";
        const json& b = detail::as_array(rec["bbox"], where);
        if (b.size() != 4) detail::invalid(where, "bbox must have 4 numbers");
        const double x = detail::as_number(b[0], where);
        const double y = detail::as_number(b[1], where);
        const double w = detail::as_number(b[2], where);
        const double h = detail::as_number(b[3], where);
        if (w < 0.0 || h < 0.0) detail::invalid(where, "negative width or height");
        rec["bbox"] = detail::box_json(Box::from_xywh(x, y, w, h));
      }
    }
  }
  return from_json(root, std::nullopt, diag);
}

inline DatasetFile convert_external_file(const std::string& path, BoxDialect dialect,
                                         std::optional<DatasetKind> kind = std::nullopt,
                                         Diagnostics* diag = nullptr) {
  auto in = detail::open_for_read(path);
  return convert_external(in, dialect, kind, diag);
}

// --- loss weights -----------------------------------------------------------

inline void write(const WeightExport& weights, std::ostream& out) {
  using detail::json;
  json root;
  root["format_version"] = kFormatVersion;
  root["kind"] = "loss_weights";
  json rows = json::array();
  for (const auto& r : weights.rows) {
    if (!is_valid(r.box)) throw ValidationError("weight row for '" + r.image_id + "' has an invalid box");
    if (!(r.weight > 0.0 && r.weight <= 1.0)) {
      throw ValidationError("weight row for '" + r.image_id + "' has weight outside (0, 1]");
    }
    json row;
    row["image_id"] = r.image_id;
    row["category_id"] = r.category;
    row["bbox"] = detail::box_json(r.box);
    row["weight"] = r.weight;
    rows.push_back(std::move(row));
  }
  root["weights"] = std::move(rows);
  detail::write_lines(out, root, {"weights"});
}

inline WeightExport parse_weights(std::istream& in) {
  using namespace detail;
  const json root = read_json(in);
  try {
    check_header(root, "loss_weights");
    WeightExport out;
    const json& rows = as_array(member(root, "weights", "document"), "weights");
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const std::string where = "weights[" + std::to_string(i) + "]";
      WeightRow r;
      r.image_id = as_id(member(rows[i], "image_id", where), where + ".image_id");
      r.category = static_cast<CategoryId>(as_integer(member(rows[i], "category_id", where),
                                                      where + ".category_id", std::numeric_limits<int>::min(),
                                                      std::numeric_limits<int>::max()));
      r.box = as_box(member(rows[i], "bbox", where), where + ".bbox");
      r.weight = as_number(member(rows[i], "weight", where), where + ".weight");
      if (!(r.weight > 0.0 && r.weight <= 1.0)) invalid(where, "weight must lie in (0, 1]");
      out.rows.push_back(std::move(r));
    }
    return out;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("invalid weight file: ") + e.what());
  }
}

inline void write_file(const WeightExport& weights, const std::string& path) {
  detail::write_to_path(path, [&](std::ostream& out) { write(weights, out); });
}

inline WeightExport parse_weights_file(const std::string& path) {
  auto in = detail::open_for_read(path);
  return parse_weights(in);
}

// --- transition matrices ----------------------------------------------------

inline void write(const std::vector<TransitionMatrix>& matrices, std::ostream& out) {
  using detail::json;
  json root;
  root["format_version"] = kFormatVersion;
  root["kind"] = "transition_matrices";
  root["no_obj_column"] = matrices.empty() ? 0 : matrices.front().no_obj();
  json list = json::array();
  for (const auto& m : matrices) {
    json rows = json::array();
    for (int i = 0; i < m.num_categories(); ++i) {
      json row = json::array();
      for (int j = 0; j <= m.num_categories(); ++j) row.push_back(m.at(i, j));
      rows.push_back(std::move(row));
    }
    list.push_back(json{{"expert", m.expert()}, {"rows", std::move(rows)}});
  }
  root["matrices"] = std::move(list);
  detail::write_lines(out, root, {"matrices"});
}

inline std::vector<TransitionMatrix> parse_matrices(std::istream& in) {
  using namespace detail;
  const json root = read_json(in);
  try {
    check_header(root, "transition_matrices");
    std::vector<TransitionMatrix> out;
    const json& list = as_array(member(root, "matrices", "document"), "matrices");
    for (std::size_t k = 0; k < list.size(); ++k) {
      const std::string where = "matrices[" + std::to_string(k) + "]";
      const std::string expert = as_id(member(list[k], "expert", where), where + ".expert");
      const json& rows = as_array(member(list[k], "rows", where), where + ".rows");
      const int c = static_cast<int>(rows.size());
      if (c < 1) invalid(where, "matrix has no rows");
      TransitionMatrix m(expert, c);
      for (int i = 0; i < c; ++i) {
        const json& row = as_array(rows[i], where + ".rows");
        if (static_cast<int>(row.size()) != c + 1) invalid(where, "row width must be categories + 1");
        for (int j = 0; j <= c; ++j) m.at(i, j) = as_number(row[j], where);
      }
      if (!m.is_valid()) invalid(where, "matrix is not a valid transition matrix");
      out.push_back(std::move(m));
    }
    return out;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("invalid matrix file: ") + e.what());
  }
}

inline void write_file(const std::vector<TransitionMatrix>& matrices, const std::string& path) {
  detail::write_to_path(path, [&](std::ostream& out) { write(matrices, out); });
}

// --- evaluation reports -----------------------------------------------------

/// A labeled report, e.g. one row per annotator.
struct NamedReport {
  std::string label;
  /// Threshold spec as given, e.g. "0.4" or "0.5:0.95:0.05".
  std::string threshold_spec;
  EvalReport report;
};

inline nlohmann::ordered_json report_json(const EvalReport& report,
                                          std::span<const Category> categories) {
  using detail::json;
  std::map<CategoryId, std::string> names;
  for (const auto& c : categories) names[c.id] = c.name;
  json out;
  out["mean_map"] = report.mean_map;
  json thresholds = json::array();
  for (const auto& t : report.thresholds) {
    json tj;
    tj["iou_threshold"] = t.iou_threshold;
    tj["map"] = t.map;
    tj["true_positives"] = t.true_positives;
    tj["false_positives"] = t.false_positives;
    tj["false_negatives"] = t.false_negatives;
    json cats = json::array();
    for (const auto& c : t.categories) {
      json cj;
      cj["category_id"] = c.category;
      cj["name"] = names[c.category];
      cj["num_truths"] = c.num_truths;
      cj["true_positives"] = c.true_positives;
      cj["false_positives"] = c.false_positives;
      cj["ap"] = c.num_truths > 0 ? json(c.ap) : json(nullptr);
      cats.push_back(std::move(cj));
    }
    tj["categories"] = std::move(cats);
    thresholds.push_back(std::move(tj));
  }
  out["thresholds"] = std::move(thresholds);
  return out;
}

inline void write(std::span<const NamedReport> reports, std::span<const Category> categories,
                  std::ostream& out) {
  using detail::json;
  json root;
  root["format_version"] = kFormatVersion;
  root["kind"] = "eval_report";
  json rows = json::array();
  for (const auto& r : reports) {
    json row;
    row["label"] = r.label;
    row["threshold_spec"] = r.threshold_spec;
    const json body = report_json(r.report, categories);
    for (const auto& [k, v] : body.items()) row[k] = v;
    rows.push_back(std::move(row));
  }
  root["reports"] = std::move(rows);
  out << root.dump(2) << "\n";
  if (!out) throw IoError("failed writing report");
}

}  // namespace annofuse

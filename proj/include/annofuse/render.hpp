#pragma once

// SVG overlay of one image's boxes. Multi-annotator files get one color per
// annotator with a legend; other kinds are colored by category. Fused boxes
// are captioned with their confidence to two decimals.

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>

#include "annofuse/dataset_io.hpp"

namespace annofuse {

namespace detail {

inline constexpr std::string_view kPalette[] = {"#e6194b", "#3cb44b", "#4363d8", "#f58231", "#911eb4",
                                                "#42d4f4", "#f032e6", "#9a6324", "#800000", "#808000"};

inline std::string svg_escape(std::string_view s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

inline std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

}  // namespace detail

/// Renders the scene `image_id` of `data`. Throws ValidationError if the
/// image is absent.
inline std::string render_svg(const DatasetFile& data, std::string_view image_id) {
  std::map<CategoryId, std::string> names;
  for (const auto& c : data.categories) names[c.id] = c.name;
  std::map<std::string, std::string, std::less<>> annotator_color;
  for (std::size_t i = 0; i < data.annotators.size(); ++i) {
    annotator_color[data.annotators[i].id] =
        std::string(detail::kPalette[i % std::size(detail::kPalette)]);
  }
  auto category_color = [&](CategoryId id) {
    std::size_t pos = 0;
    for (const auto& c : data.categories) {
      if (c.id == id) break;
      ++pos;
    }
    return std::string(detail::kPalette[pos % std::size(detail::kPalette)]);
  };

  std::ostringstream svg;
  bool found = false;
  std::visit(
      [&](const auto& scenes) {
        for (const auto& scene : scenes) {
          if (scene.image_id != image_id) continue;
          found = true;
          const bool legend = data.kind() == DatasetKind::multi_annotator && !data.annotators.empty();
          const double legend_h = legend ? 16.0 * static_cast<double>(data.annotators.size()) + 8.0 : 0.0;
          svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << detail::fmt("%g", scene.width)
              << "\" height=\"" << detail::fmt("%g", scene.height + legend_h) << "\" viewBox=\"0 0 "
              << detail::fmt("%g", scene.width) << " " << detail::fmt("%g", scene.height + legend_h)
              << "\">\n";
          svg << "  <title>" << detail::svg_escape(scene.image_id) << " ("
              << to_string(data.kind()) << ")</title>\n";
          svg << "  <rect x=\"0\" y=\"0\" width=\"" << detail::fmt("%g", scene.width) << "\" height=\""
              << detail::fmt("%g", scene.height) << "\" fill=\"black\"/>\n";
          for (const auto& item : scene.items) {
            std::string color;
            std::string caption = names.count(item.category) ? names[item.category]
                                                              : std::to_string(item.category);
            using Item = std::decay_t<decltype(item)>;
            if constexpr (std::is_same_v<Item, AnnotatedBox>) {
              color = annotator_color.count(item.annotator) ? annotator_color[item.annotator] : "#ffffff";
            } else {
              color = category_color(item.category);
            }
            if constexpr (std::is_same_v<Item, FusedBox>) {
              caption += " c=" + detail::fmt("%.2f", item.confidence);
            } else if constexpr (std::is_same_v<Item, ScoredBox>) {
              caption += " " + detail::fmt("%.2f", item.score);
            }
            const Box& b = item.box;
            svg << "  <rect x=\"" << detail::fmt("%.2f", b.x1) << "\" y=\"" << detail::fmt("%.2f", b.y1)
                << "\" width=\"" << detail::fmt("%.2f", b.width()) << "\" height=\""
                << detail::fmt("%.2f", b.height()) << "\" fill=\"none\" stroke=\"" << color
                << "\" stroke-width=\"1.5\"/>\n";
            svg << "  <text x=\"" << detail::fmt("%.2f", b.x1) << "\" y=\""
                << detail::fmt("%.2f", std::max(b.y1 - 2.0, 8.0)) << "\" fill=\"" << color
                << "\" font-family=\"monospace\" font-size=\"8\">" << detail::svg_escape(caption)
                << "</text>\n";
          }
          if (legend) {
            double y = scene.height + 14.0;
            for (const auto& a : data.annotators) {
              svg << "  <rect x=\"4\" y=\"" << detail::fmt("%g", y - 9.0)
                  << "\" width=\"10\" height=\"10\" fill=\"" << annotator_color[a.id] << "\"/>\n";
              svg << "  <text x=\"18\" y=\"" << detail::fmt("%g", y)
                  << "\" font-family=\"monospace\" font-size=\"10\">" << detail::svg_escape(a.id)
                  << " (p=" << detail::fmt("%.2f", a.proficiency) << ")</text>\n";
              y += 16.0;
            }
          }
          svg << "</svg>\n";
          return;
        }
      },
      data.scenes);
  if (!found) throw ValidationError("image '" + std::string(image_id) + "' not found");
  return svg.str();
}

}  // namespace annofuse

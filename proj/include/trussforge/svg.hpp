// SVG rendering of truss layouts: planar layouts in-plane, spatial ones
// through a fixed isometric projection. Stroke width scales with the square
// root of the cross-sectional area so thicker lines read as heavier bars.
#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "trussforge/case_config.hpp"
#include "trussforge/model.hpp"

namespace trussforge::svg {

struct RenderStyle {
  double canvas_width = 720.0;
  double margin = 48.0;
  double max_stroke = 10.0;   // stroke width of the thickest bar
  double node_radius = 4.0;
  bool annotate_mass = true;
  double density = 0.0;  // used for the mass caption when > 0
};

namespace detail {

inline std::pair<double, double> project(const Vec3& p, int dimension) {
  if (dimension == 2) return {p.x(), p.y()};
  // Isometric axonometry: x and y recede along +-30 degrees, z points up.
  const double c = std::cos(M_PI / 6.0), s = std::sin(M_PI / 6.0);
  return {(p.x() - p.y()) * c, (p.x() + p.y()) * s - p.z()};
}

inline std::string fmt(double v) {
  std::ostringstream os;
  os.precision(2);
  os << std::fixed << v;
  return os.str();
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace detail

/// Renders a layout document. Fixed nodes take their case labels when the
/// case is supplied; free nodes are numbered.
inline std::string render(const TrussLayout& g, const CaseConfig* cfg = nullptr,
                          const RenderStyle& style = {}) {
  using detail::fmt;
  std::vector<std::pair<double, double>> pts;
  pts.reserve(g.nodes.size());
  double min_x = 1e300, max_x = -1e300, min_y = 1e300, max_y = -1e300;
  for (const NodeSpec& n : g.nodes) {
    const auto [x, y] = detail::project(n.position, g.dimension);
    pts.push_back({x, y});
    min_x = std::min(min_x, x);
    max_x = std::max(max_x, x);
    min_y = std::min(min_y, y);
    max_y = std::max(max_y, y);
  }
  const double span_x = std::max(max_x - min_x, 1e-9);
  const double span_y = std::max(max_y - min_y, 1e-9);
  const double inner = style.canvas_width - 2.0 * style.margin;
  const double scale = inner / std::max(span_x, span_y);
  const double height = span_y * scale + 2.0 * style.margin + 24.0;
  auto to_px = [&](std::size_t i) {
    // SVG y grows downward.
    const double x = style.margin + (pts[i].first - min_x) * scale;
    const double y = style.margin + (max_y - pts[i].second) * scale;
    return std::pair<double, double>{x, y};
  };

  double max_area = 0.0;
  for (const Bar& b : g.bars) max_area = std::max(max_area, section_area(b.section));

  std::ostringstream out;
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(style.canvas_width)
      << "\" height=\"" << fmt(height) << "\" viewBox=\"0 0 " << fmt(style.canvas_width)
      << " " << fmt(height) << "\">\n";
  out << "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  for (const Bar& b : g.bars) {
    const auto [x1, y1] = to_px(static_cast<std::size_t>(b.u));
    const auto [x2, y2] = to_px(static_cast<std::size_t>(b.v));
    const double w =
        max_area > 0.0
            ? std::max(0.5, style.max_stroke * std::sqrt(section_area(b.section) / max_area))
            : 1.0;
    out << "  <line x1=\"" << fmt(x1) << "\" y1=\"" << fmt(y1) << "\" x2=\"" << fmt(x2)
        << "\" y2=\"" << fmt(y2) << "\" stroke=\"#33557a\" stroke-width=\""
        << fmt(w) << "\" stroke-linecap=\"round\"/>\n";
  }

  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const NodeSpec& n = g.nodes[i];
    const auto [x, y] = to_px(i);
    if (n.is_support) {
      const double r = style.node_radius * 2.2;
      out << "  <path d=\"M " << fmt(x) << " " << fmt(y) << " L " << fmt(x - r) << " "
          << fmt(y + 1.6 * r) << " L " << fmt(x + r) << " " << fmt(y + 1.6 * r)
          << " Z\" fill=\"#777777\"/>\n";
    }
    if (n.load.squaredNorm() > 0.0) {
      const auto [lx, ly] = detail::project(n.load.normalized(), g.dimension);
      const double len = style.node_radius * 7.0;
      const double ex = x + lx * len;
      const double ey = y - ly * len;
      out << "  <line x1=\"" << fmt(x) << "\" y1=\"" << fmt(y) << "\" x2=\"" << fmt(ex)
          << "\" y2=\"" << fmt(ey)
          << "\" stroke=\"#c03030\" stroke-width=\"2.00\" marker-end=\"none\"/>\n";
      out << "  <circle cx=\"" << fmt(ex) << "\" cy=\"" << fmt(ey)
          << "\" r=\"2.50\" fill=\"#c03030\"/>\n";
    }
    out << "  <circle cx=\"" << fmt(x) << "\" cy=\"" << fmt(y) << "\" r=\""
        << fmt(style.node_radius) << "\" fill=\"" << (n.is_fixed ? "#222222" : "#e8a13a")
        << "\"/>\n";

    std::string label;
    if (n.is_fixed && cfg != nullptr) {
      for (std::size_t f = 0; f < cfg->fixed_nodes.size(); ++f) {
        if ((cfg->fixed_nodes[f].position - n.position).norm() < 1e-9 &&
            f < cfg->fixed_labels.size()) {
          label = cfg->fixed_labels[f];
          break;
        }
      }
    }
    if (label.empty()) label = std::to_string(i);
    out << "  <text x=\"" << fmt(x + 6.0) << "\" y=\"" << fmt(y - 6.0)
        << "\" font-family=\"sans-serif\" font-size=\"12\">" << detail::escape(label)
        << "</text>\n";
  }

  if (style.annotate_mass && style.density > 0.0) {
    std::ostringstream caption;
    caption.precision(1);
    caption << std::fixed << "mass " << mass(g, style.density) << " kg";
    out << "  <text x=\"" << fmt(style.margin) << "\" y=\"" << fmt(height - 10.0)
        << "\" font-family=\"sans-serif\" font-size=\"14\">" << caption.str()
        << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace trussforge::svg

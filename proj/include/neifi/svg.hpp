#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "neifi/acp.hpp"
#include "neifi/config.hpp"
#include "neifi/io.hpp"

namespace neifi {

/// Hand-rolled trajectory plot: time on x, opinion on y, one polyline per
/// agent with experts highlighted, and a dashed line at the global goal.
inline std::string trajectory_svg(const Trajectory& traj, const ScenarioConfig& cfg,
                                  const std::string& title) {
    const int width = 880, height = 560;
    const double left = 64, right = 20, top = 44, bottom = 52;
    const double plot_w = width - left - right;
    const double plot_h = height - top - bottom;
    const std::size_t steps = traj.nonexpert_rows.size();
    const double x_span = steps > 1 ? static_cast<double>(steps - 1) : 1.0;
    const double y_lo = cfg.x_min, y_hi = cfg.x_max;

    auto px = [&](double step) { return left + plot_w * (step / x_span); };
    auto py = [&](double opinion) {
        return top + plot_h * (1.0 - (opinion - y_lo) / (y_hi - y_lo));
    };
    auto pt = [&](double x, double y) {
        return fmt_fixed(x, 2) + "," + fmt_fixed(y, 2);
    };

    std::string s;
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) +
         "\" height=\"" + std::to_string(height) + "\" viewBox=\"0 0 " +
         std::to_string(width) + " " + std::to_string(height) + "\">\n";
    s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s += "<text x=\"" + fmt_fixed(left, 2) + "\" y=\"24\" font-family=\"sans-serif\" "
         "font-size=\"15\" fill=\"#333\">" + title + "</text>\n";

    // Axes and ticks.
    s += "<g stroke=\"#444\" stroke-width=\"1\" font-family=\"sans-serif\" font-size=\"11\">\n";
    s += "<line x1=\"" + fmt_fixed(left, 2) + "\" y1=\"" + fmt_fixed(top, 2) + "\" x2=\"" +
         fmt_fixed(left, 2) + "\" y2=\"" + fmt_fixed(top + plot_h, 2) + "\"/>\n";
    s += "<line x1=\"" + fmt_fixed(left, 2) + "\" y1=\"" + fmt_fixed(top + plot_h, 2) +
         "\" x2=\"" + fmt_fixed(left + plot_w, 2) + "\" y2=\"" + fmt_fixed(top + plot_h, 2) +
         "\"/>\n";
    const int x_ticks = steps > 1 ? std::min<int>(8, static_cast<int>(steps - 1)) : 1;
    for (int t = 0; t <= x_ticks; ++t) {
        const double step = x_span * t / x_ticks;
        const double x = px(step);
        s += "<line x1=\"" + fmt_fixed(x, 2) + "\" y1=\"" + fmt_fixed(top + plot_h, 2) +
             "\" x2=\"" + fmt_fixed(x, 2) + "\" y2=\"" + fmt_fixed(top + plot_h + 5, 2) +
             "\"/>\n";
        s += "<text x=\"" + fmt_fixed(x - 6, 2) + "\" y=\"" + fmt_fixed(top + plot_h + 18, 2) +
             "\" stroke=\"none\" fill=\"#444\">" + fmt_fixed(step, 0) + "</text>\n";
    }
    for (int t = 0; t <= 4; ++t) {
        const double v = y_lo + (y_hi - y_lo) * t / 4.0;
        const double y = py(v);
        s += "<line x1=\"" + fmt_fixed(left - 5, 2) + "\" y1=\"" + fmt_fixed(y, 2) + "\" x2=\"" +
             fmt_fixed(left, 2) + "\" y2=\"" + fmt_fixed(y, 2) + "\"/>\n";
        s += "<text x=\"" + fmt_fixed(left - 34, 2) + "\" y=\"" + fmt_fixed(y + 4, 2) +
             "\" stroke=\"none\" fill=\"#444\">" + fmt_fixed(v, 1) + "</text>\n";
    }
    s += "<text x=\"" + fmt_fixed(left + plot_w / 2 - 10, 2) + "\" y=\"" +
         fmt_fixed(static_cast<double>(height) - 14, 2) +
         "\" stroke=\"none\" fill=\"#444\">step</text>\n";
    s += "<text x=\"12\" y=\"" + fmt_fixed(top + plot_h / 2, 2) +
         "\" stroke=\"none\" fill=\"#444\" transform=\"rotate(-90 12 " +
         fmt_fixed(top + plot_h / 2, 2) + ")\">opinion</text>\n";
    s += "</g>\n";

    // Global goal line.
    s += "<line x1=\"" + fmt_fixed(left, 2) + "\" y1=\"" + fmt_fixed(py(cfg.global_goal), 2) +
         "\" x2=\"" + fmt_fixed(left + plot_w, 2) + "\" y2=\"" +
         fmt_fixed(py(cfg.global_goal), 2) +
         "\" stroke=\"#888\" stroke-width=\"1\" stroke-dasharray=\"6,4\"/>\n";
    s += "<text x=\"" + fmt_fixed(left + plot_w - 14, 2) + "\" y=\"" +
         fmt_fixed(py(cfg.global_goal) - 5, 2) +
         "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#888\">U</text>\n";

    auto polyline = [&](const std::vector<std::vector<double>>& rows, std::size_t agent,
                        const char* color, const char* width_attr, const char* opacity) {
        std::string line = "<polyline fill=\"none\" stroke=\"";
        line += color;
        line += "\" stroke-width=\"";
        line += width_attr;
        line += "\" stroke-opacity=\"";
        line += opacity;
        line += "\" points=\"";
        for (std::size_t k = 0; k < rows.size(); ++k) {
            if (k) line += " ";
            line += pt(px(static_cast<double>(k)), py(rows[k][agent]));
        }
        line += "\"/>\n";
        return line;
    };

    if (!traj.nonexpert_rows.empty()) {
        for (std::size_t a = 0; a < traj.nonexpert_rows[0].size(); ++a)
            s += polyline(traj.nonexpert_rows, a, "#4878a8", "1", "0.7");
        for (std::size_t a = 0; a < traj.expert_rows[0].size(); ++a)
            s += polyline(traj.expert_rows, a, "#c03028", "2", "0.95");
    }
    s += "</svg>\n";
    return s;
}

} // namespace neifi

#include "mtdrive/bev_plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mtdrive/errors.hpp"

namespace mtdrive {

namespace {

struct Mapper {
    double min_x, max_y, scale, pad;

    double x(double wx) const { return (wx - min_x) * scale + pad; }
    double y(double wy) const { return (max_y - wy) * scale + pad; }
};

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", v);
    return buf;
}

void polyline(std::ostringstream& out, const Mapper& m, const std::vector<Vec2>& pts,
              const char* style) {
    out << "<polyline fill=\"none\" " << style << " points=\"";
    for (const Vec2& p : pts) {
        out << fmt(m.x(p.x)) << ',' << fmt(m.y(p.y)) << ' ';
    }
    out << "\"/>\n";
}

void box_outline(std::ostringstream& out, const Mapper& m, const OrientedBox& box,
                 const char* style) {
    out << "<polygon " << style << " points=\"";
    for (const Vec2& c : box_corners(box)) {
        out << fmt(m.x(c.x)) << ',' << fmt(m.y(c.y)) << ' ';
    }
    out << "\"/>\n";
}

void cross(std::ostringstream& out, const Mapper& m, double wx, double wy, double r,
           const char* style) {
    const double cx = m.x(wx);
    const double cy = m.y(wy);
    out << "<line " << style << " x1=\"" << fmt(cx - r) << "\" y1=\"" << fmt(cy - r) << "\" x2=\""
        << fmt(cx + r) << "\" y2=\"" << fmt(cy + r) << "\"/>\n";
    out << "<line " << style << " x1=\"" << fmt(cx - r) << "\" y1=\"" << fmt(cy + r) << "\" x2=\""
        << fmt(cx + r) << "\" y2=\"" << fmt(cy - r) << "\"/>\n";
}

void dot(std::ostringstream& out, const Mapper& m, double wx, double wy, double r,
         const char* fill) {
    out << "<circle cx=\"" << fmt(m.x(wx)) << "\" cy=\"" << fmt(m.y(wy)) << "\" r=\"" << fmt(r)
        << "\" fill=\"" << fill << "\"/>\n";
}

const char* turn_color(std::size_t index, std::size_t total) {
    static const char* shades[] = {"#c6dbef", "#9ecae1", "#6baed6", "#4292c6", "#2171b5", "#084594"};
    if (total <= 1) {
        return shades[5];
    }
    const std::size_t steps = sizeof(shades) / sizeof(shades[0]);
    const std::size_t pick = index * (steps - 1) / (total - 1);
    return shades[pick];
}

}  // namespace

void write_bev_svg(const std::string& path, const Scenario& scenario,
                   const std::vector<BevTurnLayer>& turns) {
    double min_x = -6.0, max_x = 30.0, min_y = -8.0, max_y = 8.0;
    for (const Vec2& v : scenario.drivable_area.vertices) {
        min_x = std::min(min_x, v.x - 2.0);
        max_x = std::max(max_x, v.x + 2.0);
        min_y = std::min(min_y, v.y - 2.0);
        max_y = std::max(max_y, v.y + 2.0);
    }
    for (const AgentTrack& a : scenario.agents) {
        min_x = std::min(min_x, a.box.center_x - 4.0);
        max_x = std::max(max_x, a.box.center_x + 4.0);
        min_y = std::min(min_y, a.box.center_y - 4.0);
        max_y = std::max(max_y, a.box.center_y + 4.0);
    }
    const double scale = 9.0;
    const double pad = 12.0;
    const Mapper m{min_x, max_y, scale, pad};
    const double width = (max_x - min_x) * scale + 2.0 * pad;
    const double height = (max_y - min_y) * scale + 2.0 * pad;

    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(width) << "\" height=\""
        << fmt(height) << "\" viewBox=\"0 0 " << fmt(width) << ' ' << fmt(height) << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";

    // drivable area + route
    out << "<polygon fill=\"#edf0f2\" stroke=\"#9aa4ad\" stroke-width=\"1\" points=\"";
    for (const Vec2& v : scenario.drivable_area.vertices) {
        out << fmt(m.x(v.x)) << ',' << fmt(m.y(v.y)) << ' ';
    }
    out << "\"/>\n";
    polyline(out, m, scenario.centerline,
             "stroke=\"#b3b9bf\" stroke-width=\"1\" stroke-dasharray=\"6,5\"");

    // agents at t = 0
    for (const AgentTrack& a : scenario.agents) {
        const bool ped = a.box.class_name == "pedestrian";
        box_outline(out, m, a.box,
                    ped ? "fill=\"#f5c189\" stroke=\"#b9771f\" stroke-width=\"1\""
                        : "fill=\"#aab4bd\" stroke=\"#5d6b77\" stroke-width=\"1\"");
    }

    // ego footprint at the origin
    box_outline(out, m, footprint_at(Pose2D{}, kDefaultEgoLength, kDefaultEgoWidth),
                "fill=\"#d1e7d1\" stroke=\"#3c763d\" stroke-width=\"1\"");

    // expert trajectory
    if (scenario.gt_trajectory.has_value()) {
        std::vector<Vec2> pts{{0.0, 0.0}};
        for (const Pose2D& p : scenario.gt_trajectory->points) {
            pts.push_back(Vec2{p.x, p.y});
        }
        polyline(out, m, pts, "stroke=\"#4daf4a\" stroke-width=\"1.5\"");
    }

    // per-turn trajectories, light to dark
    std::size_t drawn = 0;
    std::size_t total = 0;
    for (const BevTurnLayer& t : turns) {
        if (t.trajectory != nullptr) {
            ++total;
        }
    }
    for (const BevTurnLayer& t : turns) {
        if (t.trajectory == nullptr) {
            continue;
        }
        std::vector<Vec2> pts{{0.0, 0.0}};
        for (const Pose2D& p : t.trajectory->points) {
            pts.push_back(Vec2{p.x, p.y});
        }
        std::string style = "stroke=\"";
        style += turn_color(drawn, total);
        style += "\" stroke-width=\"1.5\"";
        polyline(out, m, pts, style.c_str());
        for (const Pose2D& p : t.trajectory->points) {
            dot(out, m, p.x, p.y, 1.6, turn_color(drawn, total));
        }
        ++drawn;
    }

    // violation markers from each turn's report
    for (const BevTurnLayer& t : turns) {
        if (t.trajectory == nullptr || t.report == nullptr) {
            continue;
        }
        for (int idx : t.report->dac_evidence) {
            const Pose2D& p = t.trajectory->points[static_cast<std::size_t>(idx)];
            cross(out, m, p.x, p.y, 4.0, "stroke=\"#e41a1c\" stroke-width=\"1.6\"");
        }
        for (const BoxViolation& v : t.report->nc_evidence) {
            dot(out, m, v.box.center_x, v.box.center_y, 4.0, "#ffd92f");
        }
        for (const BoxViolation& v : t.report->ttc_evidence) {
            dot(out, m, v.box.center_x, v.box.center_y, 3.0, "#377eb8");
        }
    }

    out << "<text x=\"" << fmt(pad) << "\" y=\"" << fmt(pad) << "\" font-size=\"11\" fill=\"#333\">"
        << scenario.id << " | red cross: DAC point, yellow dot: NC box, blue dot: TTC box</text>\n";
    out << "</svg>\n";

    std::ofstream file(path, std::ios::binary);
    if (!file) {
        throw DataError("cannot open for writing: " + path);
    }
    file << out.str();
    if (!file) {
        throw DataError("write failed: " + path);
    }
}

}  // namespace mtdrive

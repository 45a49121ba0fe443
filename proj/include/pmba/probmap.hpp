#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "pmba/errors.hpp"

namespace pmba {

/// Axis-aligned detection box, stored as center + half extents in pixels.
struct BoundingBox {
    Eigen::Vector2d center = Eigen::Vector2d::Zero();
    double half_width = 1.0;
    double half_height = 1.0;

    BoundingBox() = default;
    BoundingBox(const Eigen::Vector2d& c, double hw, double hh)
        : center(c), half_width(hw), half_height(hh) {
        if (hw <= 0.0 || hh <= 0.0) throw InvalidBox("box half extents must be positive");
    }

    bool contains(const Eigen::Vector2d& px) const {
        return std::abs(px.x() - center.x()) <= half_width &&
               std::abs(px.y() - center.y()) <= half_height;
    }
};

struct Detection {
    std::string label;
    BoundingBox box;
    double detector_score = 1.0;  // carried but does not modulate the peak
    bool is_static = true;
};

/// Clamped Gaussian weight profile for a detection box. The covariance is
/// axis-aligned, calibrated per box so the weight is `peak` at the center and
/// exactly `floor` at the edge midpoints; corners are clamped up to `floor`.
struct GaussianWeightModel {
    double peak = 0.99;
    double floor = 0.1;

    GaussianWeightModel() = default;
    GaussianWeightModel(double peak_, double floor_) : peak(peak_), floor(floor_) {
        if (!(0.0 < floor && floor < peak && peak <= 1.0))
            throw std::invalid_argument("require 0 < floor < peak <= 1");
    }

    /// Half-extent-to-sigma ratio: sigma = half_extent / kappa.
    double kappa() const { return std::sqrt(2.0 * std::log(peak / floor)); }
};

/// Per-pixel confidence raster, row-major, values in [floor, peak].
class ProbabilityMap {
  public:
    ProbabilityMap(int width, int height, double fill)
        : width_(width), height_(height), values_(static_cast<size_t>(width) * height, fill) {
        if (width < 1 || height < 1) throw std::invalid_argument("map must be at least 1x1");
    }

    int width() const { return width_; }
    int height() const { return height_; }

    double at(int x, int y) const { return values_[static_cast<size_t>(y) * width_ + x]; }
    double& at(int x, int y) { return values_[static_cast<size_t>(y) * width_ + x]; }

    /// Nearest-pixel lookup: rounds to the nearest integer coordinate and
    /// clamps to the raster bounds.
    double sample(const Eigen::Vector2d& px) const {
        const int x = std::clamp(static_cast<int>(std::lround(px.x())), 0, width_ - 1);
        const int y = std::clamp(static_cast<int>(std::lround(px.y())), 0, height_ - 1);
        return at(x, y);
    }

    const std::vector<double>& values() const { return values_; }

  private:
    int width_;
    int height_;
    std::vector<double> values_;
};

/// Weight of one pixel under one box: max(floor, peak * exp(-1/2 (X-u)^T S^-1 (X-u)))
/// with S = diag((half_width/kappa)^2, (half_height/kappa)^2).
inline double box_weight(const GaussianWeightModel& model, const BoundingBox& box,
                         const Eigen::Vector2d& pixel) {
    const double k = model.kappa();
    const double nx = (pixel.x() - box.center.x()) * k / box.half_width;
    const double ny = (pixel.y() - box.center.y()) * k / box.half_height;
    const double g = model.peak * std::exp(-0.5 * (nx * nx + ny * ny));
    return std::max(model.floor, g);
}

/// Rasterizes detections into a confidence map. Every pixel is the max of
/// box_weight over the static boxes containing it, or floor outside all of
/// them. Dynamic detections contribute nothing. Boxes may extend past the
/// image; they are clipped to the raster but evaluated about the true center.
inline ProbabilityMap build_map(const std::vector<Detection>& detections, int width, int height,
                                const GaussianWeightModel& model = {}) {
    ProbabilityMap map(width, height, model.floor);
    for (const Detection& det : detections) {
        if (!det.is_static) continue;
        const BoundingBox& box = det.box;
        const int x0 = std::max(0, static_cast<int>(std::ceil(box.center.x() - box.half_width)));
        const int x1 = std::min(width - 1, static_cast<int>(std::floor(box.center.x() + box.half_width)));
        const int y0 = std::max(0, static_cast<int>(std::ceil(box.center.y() - box.half_height)));
        const int y1 = std::min(height - 1, static_cast<int>(std::floor(box.center.y() + box.half_height)));
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                double& v = map.at(x, y);
                v = std::max(v, box_weight(model, box, {static_cast<double>(x), static_cast<double>(y)}));
            }
        }
    }
    return map;
}

/// Binary PGM (P5, maxval 255); pixel byte = round(255 * prob).
inline void render_pgm(const ProbabilityMap& map, std::ostream& out) {
    out << "P5\n" << map.width() << ' ' << map.height() << "\n255\n";
    for (double v : map.values()) out.put(static_cast<char>(std::lround(255.0 * v)));
}

inline std::string render_pgm(const ProbabilityMap& map) {
    std::ostringstream out;
    render_pgm(map, out);
    return out.str();
}

}  // namespace pmba

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <sstream>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pmba/geometry.hpp"
#include "pmba/probmap.hpp"

namespace pmba {

struct TimedPose {
    double timestamp = 0.0;
    Pose pose;
};

/// Timestamped pose sequence, strictly increasing timestamps. Poses follow
/// the TUM convention (camera-to-world).
using Trajectory = std::vector<TimedPose>;

struct DetectionFrame {
    double timestamp = 0.0;
    int width = 0;
    int height = 0;
    std::vector<Detection> detections;
};

/// TUM format: `timestamp tx ty tz qx qy qz qw`, '#' comments and blank
/// lines skipped. Quaternions are renormalized; norms off by more than 1e-3
/// are rejected.
inline Trajectory read_tum_trajectory(std::istream& in) {
    Trajectory traj;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        std::istringstream ss(line);
        double t, tx, ty, tz, qx, qy, qz, qw;
        if (!(ss >> t >> tx >> ty >> tz >> qx >> qy >> qz >> qw))
            throw ParseError(line_no, "expected 8 fields: timestamp tx ty tz qx qy qz qw");
        std::string extra;
        if (ss >> extra) throw ParseError(line_no, "trailing field '" + extra + "'");
        Eigen::Quaterniond q(qw, qx, qy, qz);
        if (std::abs(q.norm() - 1.0) > 1e-3)
            throw ParseError(line_no, "quaternion norm deviates by more than 1e-3");
        if (!traj.empty() && t <= traj.back().timestamp) throw NonMonotonicTimestamps(line_no);
        traj.push_back({t, Pose(q, {tx, ty, tz})});
    }
    return traj;
}

inline void write_tum_trajectory(const Trajectory& traj, std::ostream& out) {
    out << "# timestamp tx ty tz qx qy qz qw\n";
    char buf[256];
    for (const TimedPose& tp : traj) {
        const Eigen::Vector3d& t = tp.pose.translation();
        const Eigen::Quaterniond& q = tp.pose.rotation();
        std::snprintf(buf, sizeof buf, "%.6f %.6f %.6f %.6f %.6f %.6f %.6f %.6f\n", tp.timestamp,
                      t.x(), t.y(), t.z(), q.x(), q.y(), q.z(), q.w());
        out << buf;
    }
}

/// Detection files are JSON lines, one frame per line:
/// {"t":s,"w":px,"h":px,"dets":[{"label":..,"cx":..,"cy":..,"hw":..,"hh":..,"score":..,"static":..}]}
inline std::vector<DetectionFrame> read_detections(std::istream& in) {
    std::vector<DetectionFrame> frames;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(line_no, e.what());
        }
        DetectionFrame frame;
        try {
            frame.timestamp = j.at("t").get<double>();
            frame.width = j.at("w").get<int>();
            frame.height = j.at("h").get<int>();
            for (const auto& d : j.at("dets")) {
                const double hw = d.at("hw").get<double>();
                const double hh = d.at("hh").get<double>();
                if (hw <= 0.0 || hh <= 0.0)
                    throw InvalidBox("line " + std::to_string(line_no) + ": non-positive half extent");
                Detection det;
                det.label = d.at("label").get<std::string>();
                det.box = BoundingBox({d.at("cx").get<double>(), d.at("cy").get<double>()}, hw, hh);
                det.detector_score = d.at("score").get<double>();
                det.is_static = d.at("static").get<bool>();
                frame.detections.push_back(std::move(det));
            }
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(line_no, e.what());
        }
        frames.push_back(std::move(frame));
    }
    return frames;
}

inline void write_detections(const std::vector<DetectionFrame>& frames, std::ostream& out) {
    for (const DetectionFrame& frame : frames) {
        nlohmann::json dets = nlohmann::json::array();
        for (const Detection& d : frame.detections) {
            dets.push_back({{"label", d.label},
                            {"cx", d.box.center.x()},
                            {"cy", d.box.center.y()},
                            {"hw", d.box.half_width},
                            {"hh", d.box.half_height},
                            {"score", d.detector_score},
                            {"static", d.is_static}});
        }
        out << nlohmann::json{{"t", frame.timestamp},
                              {"w", frame.width},
                              {"h", frame.height},
                              {"dets", dets}}
                   .dump()
            << '\n';
    }
}

/// Greedy nearest-timestamp association: candidate pairs sorted by |dt|,
/// accepted when both indices are unused and |dt| <= max_dt. Result sorted
/// by the first index.
inline std::vector<std::pair<int, int>> associate(const Trajectory& a, const Trajectory& b,
                                                  double max_dt = 0.02) {
    struct Candidate {
        double adt;
        int i, j;
    };
    std::vector<Candidate> candidates;
    for (int i = 0; i < static_cast<int>(a.size()); ++i) {
        for (int j = 0; j < static_cast<int>(b.size()); ++j) {
            const double adt = std::abs(a[i].timestamp - b[j].timestamp);
            if (adt <= max_dt) candidates.push_back({adt, i, j});
        }
    }
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& x, const Candidate& y) {
        if (x.adt != y.adt) return x.adt < y.adt;
        if (x.i != y.i) return x.i < y.i;
        return x.j < y.j;
    });
    std::vector<bool> used_a(a.size(), false), used_b(b.size(), false);
    std::vector<std::pair<int, int>> pairs;
    for (const Candidate& c : candidates) {
        if (used_a[c.i] || used_b[c.j]) continue;
        used_a[c.i] = used_b[c.j] = true;
        pairs.emplace_back(c.i, c.j);
    }
    std::sort(pairs.begin(), pairs.end());
    return pairs;
}

}  // namespace pmba

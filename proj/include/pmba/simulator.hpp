#pragma once

#include <Eigen/Core>
#include <cmath>
#include <istream>
#include <sstream>
#include <string>
#include <vector>

#include "pmba/ba.hpp"
#include "pmba/dataset.hpp"
#include "pmba/geometry.hpp"
#include "pmba/probmap.hpp"
#include "pmba/rng.hpp"

namespace pmba {

enum class TrajectoryKind { orbit, line, arc };

struct SceneConfig {
    std::uint64_t seed = 7;
    int n_frames = 60;
    int n_static_landmarks = 200;
    int n_dynamic_landmarks = 50;
    double pixel_noise_sigma = 1.0;
    double dynamic_velocity_sigma = 0.03;  // meters per frame, per axis
    TrajectoryKind trajectory = TrajectoryKind::orbit;
    double radius = 3.0;  // orbit/arc radius, also line standoff distance
    double length = 2.0;  // line trajectory length
    CameraIntrinsics intrinsics{525.0, 525.0, 319.5, 239.5, 640, 480};
    double detection_coverage = 1.0;
    double box_jitter_sigma = 0.0;
    double init_twist_sigma = 0.05;  // perturbation of emitted initial poses
    double fps = 30.0;

    int n_clusters() const { return std::max(1, n_static_landmarks / 25); }
};

/// Synthetic world with ground truth. Static landmark ids are [0, n_static);
/// dynamic ids follow. Observations carry the noisy pixel with weight 1.
struct SyntheticScene {
    SceneConfig config;
    Trajectory ground_truth;                  // camera-to-world, TUM convention
    std::vector<Pose> world_to_camera;        // per frame
    std::vector<Pose> initial_guess;          // perturbed world-to-camera, per frame
    std::vector<Eigen::Vector3d> static_landmarks;
    std::vector<int> cluster_of;              // per static landmark
    std::vector<bool> cluster_covered;        // receives detection boxes
    std::vector<Eigen::Vector3d> dynamic_initial;
    std::vector<Eigen::Vector3d> dynamic_velocity;
    std::vector<std::vector<Observation>> observations;  // per frame
    std::vector<DetectionFrame> detections;              // per frame
    bool dynamic_as_static = false;

    int dynamic_id_base() const { return static_cast<int>(static_landmarks.size()); }

    /// True position of dynamic landmark j at a frame (constant velocity).
    Eigen::Vector3d dynamic_position(int j, int frame) const {
        return dynamic_initial[j] + static_cast<double>(frame) * dynamic_velocity[j];
    }

    /// Position used when building BA problems: frozen at frame 0 when the
    /// scene is contaminated, the moving truth otherwise.
    Eigen::Vector3d modeled_position(int landmark_id, int frame) const {
        if (landmark_id < dynamic_id_base()) return static_landmarks[landmark_id];
        const int j = landmark_id - dynamic_id_base();
        return dynamic_as_static ? dynamic_initial[j] : dynamic_position(j, frame);
    }
};

namespace detail {

// World-to-camera pose looking from `position` toward `target`, world y up.
inline Pose look_at(const Eigen::Vector3d& position, const Eigen::Vector3d& target) {
    const Eigen::Vector3d forward = (target - position).normalized();
    const Eigen::Vector3d up(0.0, 1.0, 0.0);
    const Eigen::Vector3d right = up.cross(forward).normalized();
    const Eigen::Vector3d down = forward.cross(right);
    Eigen::Matrix3d r_cw;  // camera axes as world vectors
    r_cw.col(0) = right;
    r_cw.col(1) = down;
    r_cw.col(2) = forward;
    const Eigen::Matrix3d r = r_cw.transpose();
    return Pose(Eigen::Quaterniond(r), -(r * position));
}

inline Eigen::Vector3d camera_position(const SceneConfig& cfg, int frame) {
    const double s = cfg.n_frames > 1 ? static_cast<double>(frame) / (cfg.n_frames - 1) : 0.0;
    switch (cfg.trajectory) {
        case TrajectoryKind::orbit: {
            const double th = 2.0 * M_PI * frame / cfg.n_frames;
            return {cfg.radius * std::sin(th), 0.0, -cfg.radius * std::cos(th)};
        }
        case TrajectoryKind::arc: {
            const double th = -M_PI / 4.0 + s * M_PI / 2.0;
            return {cfg.radius * std::sin(th), 0.0, -cfg.radius * std::cos(th)};
        }
        case TrajectoryKind::line:
            return {-cfg.length / 2.0 + s * cfg.length, 0.0, -cfg.radius};
    }
    return Eigen::Vector3d::Zero();
}

}  // namespace detail

/// Deterministic scene generation. Draw order from the seeded generator:
/// cluster centers, cluster coverage, static offsets, dynamic initial
/// positions + velocities, then per frame: pixel noise per visible landmark
/// (id order), box jitter per emitted cluster, initial-pose perturbation.
inline SyntheticScene generate(const SceneConfig& cfg) {
    SyntheticScene scene;
    scene.config = cfg;
    Rng rng(cfg.seed);

    const int n_clusters = cfg.n_clusters();
    std::vector<Eigen::Vector3d> cluster_centers(n_clusters);
    for (auto& c : cluster_centers)
        c = {rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2)};

    scene.cluster_covered.resize(n_clusters);
    for (int c = 0; c < n_clusters; ++c)
        scene.cluster_covered[c] = rng.uniform() < cfg.detection_coverage || cfg.detection_coverage >= 1.0;

    scene.static_landmarks.resize(cfg.n_static_landmarks);
    scene.cluster_of.resize(cfg.n_static_landmarks);
    for (int j = 0; j < cfg.n_static_landmarks; ++j) {
        const int c = j % n_clusters;
        scene.cluster_of[j] = c;
        scene.static_landmarks[j] =
            cluster_centers[c] + Eigen::Vector3d(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3),
                                                 rng.uniform(-0.3, 0.3));
    }

    scene.dynamic_initial.resize(cfg.n_dynamic_landmarks);
    scene.dynamic_velocity.resize(cfg.n_dynamic_landmarks);
    for (int j = 0; j < cfg.n_dynamic_landmarks; ++j) {
        scene.dynamic_initial[j] = {rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2),
                                    rng.uniform(-1.2, 1.2)};
        scene.dynamic_velocity[j] = {rng.gauss(cfg.dynamic_velocity_sigma),
                                     rng.gauss(cfg.dynamic_velocity_sigma),
                                     rng.gauss(cfg.dynamic_velocity_sigma)};
    }

    const CameraIntrinsics& k = cfg.intrinsics;
    const int n_total = cfg.n_static_landmarks + cfg.n_dynamic_landmarks;
    size_t total_obs = 0;

    for (int frame = 0; frame < cfg.n_frames; ++frame) {
        const Pose w2c = detail::look_at(detail::camera_position(cfg, frame), Eigen::Vector3d::Zero());
        scene.world_to_camera.push_back(w2c);
        const Pose c2w = w2c.inverse();
        scene.ground_truth.push_back({frame / cfg.fps, c2w});

        std::vector<Observation> obs;
        // noisy pixels per cluster, for box fitting
        std::vector<std::vector<Eigen::Vector2d>> cluster_pixels(n_clusters);
        for (int id = 0; id < n_total; ++id) {
            const Eigen::Vector3d p = id < cfg.n_static_landmarks
                                          ? scene.static_landmarks[id]
                                          : scene.dynamic_position(id - cfg.n_static_landmarks, frame);
            const Eigen::Vector3d pc = w2c.apply(p);
            if (pc.z() <= 1e-9) continue;
            const Eigen::Vector2d pix = {k.fx * pc.x() / pc.z() + k.cx, k.fy * pc.y() / pc.z() + k.cy};
            if (pix.x() < 0.0 || pix.x() > k.width - 1 || pix.y() < 0.0 || pix.y() > k.height - 1)
                continue;
            const Eigen::Vector2d noisy = pix + Eigen::Vector2d(rng.gauss(cfg.pixel_noise_sigma),
                                                                rng.gauss(cfg.pixel_noise_sigma));
            obs.push_back({frame, id, noisy, 1.0});
            if (id < cfg.n_static_landmarks) cluster_pixels[scene.cluster_of[id]].push_back(noisy);
        }
        total_obs += obs.size();
        scene.observations.push_back(std::move(obs));

        DetectionFrame det_frame;
        det_frame.timestamp = frame / cfg.fps;
        det_frame.width = k.width;
        det_frame.height = k.height;
        for (int c = 0; c < n_clusters; ++c) {
            if (!scene.cluster_covered[c] || cluster_pixels[c].empty()) continue;
            Eigen::Vector2d lo = cluster_pixels[c].front(), hi = lo;
            for (const auto& p : cluster_pixels[c]) {
                lo = lo.cwiseMin(p);
                hi = hi.cwiseMax(p);
            }
            const Eigen::Vector2d center = 0.5 * (lo + hi) +
                                           Eigen::Vector2d(rng.gauss(cfg.box_jitter_sigma),
                                                           rng.gauss(cfg.box_jitter_sigma));
            // projected extent inflated 10%, never degenerate
            const double hw = std::max(0.55 * (hi.x() - lo.x()), 2.0);
            const double hh = std::max(0.55 * (hi.y() - lo.y()), 2.0);
            Detection det;
            det.label = "cluster_" + std::to_string(c);
            det.box = BoundingBox(center, hw, hh);
            det.detector_score = 0.9;
            det.is_static = true;
            det_frame.detections.push_back(std::move(det));
        }
        scene.detections.push_back(std::move(det_frame));

        Twist perturb;
        perturb.rotational = {rng.gauss(cfg.init_twist_sigma), rng.gauss(cfg.init_twist_sigma),
                              rng.gauss(cfg.init_twist_sigma)};
        perturb.translational = {rng.gauss(cfg.init_twist_sigma), rng.gauss(cfg.init_twist_sigma),
                                 rng.gauss(cfg.init_twist_sigma)};
        scene.initial_guess.push_back(exp_map(perturb) * w2c);
    }

    if (total_obs == 0) throw EmptyScene();
    return scene;
}

/// Variant where BA problems model each dynamic landmark as one fixed point
/// at its frame-0 position, reproducing the static-world misjudgment.
inline SyntheticScene contaminate_as_static(SyntheticScene scene) {
    if (!scene.dynamic_initial.empty()) scene.dynamic_as_static = true;
    return scene;
}

/// Pose-only problem for one frame: the frame's perturbed initial pose, all
/// landmarks fixed at their modeled positions, the frame's observations.
inline BAProblem make_problem(const SyntheticScene& scene, int frame) {
    BAProblem problem;
    problem.intrinsics = scene.config.intrinsics;
    problem.poses[frame] = scene.initial_guess[frame];
    for (const Observation& obs : scene.observations[frame]) {
        if (!problem.landmarks.count(obs.landmark_id))
            problem.landmarks[obs.landmark_id] = {obs.landmark_id,
                                                  scene.modeled_position(obs.landmark_id, frame)};
        problem.observations.push_back(obs);
    }
    problem.fix_all_landmarks();
    return problem;
}

/// Joint pose-only problem over all frames. Only valid for scenes whose
/// modeled landmark positions are frame-independent (static-only scenes or
/// contaminated ones).
inline BAProblem make_joint_problem(const SyntheticScene& scene) {
    BAProblem problem;
    problem.intrinsics = scene.config.intrinsics;
    for (int frame = 0; frame < static_cast<int>(scene.initial_guess.size()); ++frame) {
        problem.poses[frame] = scene.initial_guess[frame];
        for (const Observation& obs : scene.observations[frame]) {
            if (!problem.landmarks.count(obs.landmark_id))
                problem.landmarks[obs.landmark_id] = {obs.landmark_id,
                                                      scene.modeled_position(obs.landmark_id, 0)};
            problem.observations.push_back(obs);
        }
    }
    problem.fix_all_landmarks();
    return problem;
}

/// Flat `key = value` config text with '#' comments.
inline SceneConfig parse_scene_config(std::istream& in) {
    SceneConfig cfg;
    double fx = cfg.intrinsics.fx, fy = cfg.intrinsics.fy;
    double cx = cfg.intrinsics.cx, cy = cfg.intrinsics.cy;
    int width = cfg.intrinsics.width, height = cfg.intrinsics.height;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            if (line.find_first_not_of(" \t\r") != std::string::npos)
                throw ParseError(line_no, "expected key = value");
            continue;
        }
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        try {
            if (key == "seed") cfg.seed = std::stoull(value);
            else if (key == "n_frames") cfg.n_frames = std::stoi(value);
            else if (key == "n_static_landmarks") cfg.n_static_landmarks = std::stoi(value);
            else if (key == "n_dynamic_landmarks") cfg.n_dynamic_landmarks = std::stoi(value);
            else if (key == "pixel_noise_sigma") cfg.pixel_noise_sigma = std::stod(value);
            else if (key == "dynamic_velocity_sigma") cfg.dynamic_velocity_sigma = std::stod(value);
            else if (key == "radius") cfg.radius = std::stod(value);
            else if (key == "length") cfg.length = std::stod(value);
            else if (key == "detection_coverage") cfg.detection_coverage = std::stod(value);
            else if (key == "box_jitter_sigma") cfg.box_jitter_sigma = std::stod(value);
            else if (key == "init_twist_sigma") cfg.init_twist_sigma = std::stod(value);
            else if (key == "fps") cfg.fps = std::stod(value);
            else if (key == "fx") fx = std::stod(value);
            else if (key == "fy") fy = std::stod(value);
            else if (key == "cx") cx = std::stod(value);
            else if (key == "cy") cy = std::stod(value);
            else if (key == "width") width = std::stoi(value);
            else if (key == "height") height = std::stoi(value);
            else if (key == "trajectory") {
                if (value == "orbit") cfg.trajectory = TrajectoryKind::orbit;
                else if (value == "line") cfg.trajectory = TrajectoryKind::line;
                else if (value == "arc") cfg.trajectory = TrajectoryKind::arc;
                else throw ParseError(line_no, "unknown trajectory '" + value + "'");
            } else {
                throw ParseError(line_no, "unknown key '" + key + "'");
            }
        } catch (const std::invalid_argument&) {
            throw ParseError(line_no, "bad value for '" + key + "'");
        }
    }
    cfg.intrinsics = CameraIntrinsics(fx, fy, cx, cy, width, height);
    if (cfg.n_frames < 1 || cfg.n_static_landmarks < 0 || cfg.n_dynamic_landmarks < 0 ||
        cfg.pixel_noise_sigma < 0 || cfg.dynamic_velocity_sigma < 0 ||
        cfg.detection_coverage < 0 || cfg.detection_coverage > 1)
        throw std::invalid_argument("invalid scene config");
    return cfg;
}

}  // namespace pmba

#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "pmba/geometry.hpp"
#include "pmba/probmap.hpp"

namespace pmba {

struct Landmark {
    int id = 0;
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
};

struct Observation {
    int frame_id = 0;
    int landmark_id = 0;
    Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
    double weight = 1.0;  // confidence in [0,1], looked up from the probability map
};

/// Weighted reprojection problem: poses (world -> camera), landmarks,
/// observations with per-residual confidence weights.
struct BAProblem {
    CameraIntrinsics intrinsics;
    std::map<int, Pose> poses;
    std::map<int, Landmark> landmarks;
    std::vector<Observation> observations;
    std::set<int> fixed_poses;
    std::set<int> fixed_landmarks;

    void fix_all_landmarks() {
        for (const auto& [id, lm] : landmarks) fixed_landmarks.insert(id);
    }
};

enum class Termination { gradient_small, step_small, max_iterations, cost_stalled };

struct SolveReport {
    int iterations = 0;
    double initial_cost = 0.0;
    double final_cost = 0.0;
    bool converged = false;
    Termination termination = Termination::max_iterations;
    int skipped_observations = 0;  // lost positive depth during the final iteration
};

struct SolveOptions {
    int max_iterations = 100;
    double gradient_tol = 1e-10;  // infinity norm of J^T Omega r
    double step_tol = 1e-12;      // norm of the stacked twist/point increment
    double lm_initial_lambda = 1e-3;
};

inline const char* to_string(Termination t) {
    switch (t) {
        case Termination::gradient_small: return "gradient_small";
        case Termination::step_small: return "step_small";
        case Termination::max_iterations: return "max_iterations";
        case Termination::cost_stalled: return "cost_stalled";
    }
    return "unknown";
}

/// Reprojection residual U_k - pi(K T P_k). Throws NonPositiveDepth when the
/// landmark projects behind the camera.
inline Eigen::Vector2d residual(const BAProblem& problem, const Observation& obs) {
    const Pose& pose = problem.poses.at(obs.frame_id);
    const Landmark& lm = problem.landmarks.at(obs.landmark_id);
    return obs.pixel - project(problem.intrinsics, pose, lm.position).pixel;
}

/// 1/2 sum_k w_k ||r_k||^2 over observations with positive depth.
inline double weighted_cost(const BAProblem& problem) {
    double cost = 0.0;
    for (const Observation& obs : problem.observations) {
        try {
            cost += 0.5 * obs.weight * residual(problem, obs).squaredNorm();
        } catch (const NonPositiveDepth&) {
            // excluded from the current evaluation
        }
    }
    return cost;
}

/// Sets each observation's weight to the map value at its pixel
/// (nearest-pixel lookup). Maps must match the intrinsics raster size.
inline BAProblem attach_weights(BAProblem problem, const std::map<int, ProbabilityMap>& maps) {
    for (Observation& obs : problem.observations) {
        const auto it = maps.find(obs.frame_id);
        if (it == maps.end())
            throw DimensionMismatch("no probability map for frame " + std::to_string(obs.frame_id));
        const ProbabilityMap& map = it->second;
        if (map.width() != problem.intrinsics.width || map.height() != problem.intrinsics.height)
            throw DimensionMismatch("map size " + std::to_string(map.width()) + "x" +
                                    std::to_string(map.height()) + " does not match intrinsics raster");
        obs.weight = map.sample(obs.pixel);
    }
    return problem;
}

namespace detail {

// d(pixel)/d(p_camera) for the pinhole model.
inline Eigen::Matrix<double, 2, 3> projection_jacobian(const CameraIntrinsics& k,
                                                       const Eigen::Vector3d& pc) {
    const double iz = 1.0 / pc.z();
    Eigen::Matrix<double, 2, 3> j;
    j << k.fx * iz, 0.0, -k.fx * pc.x() * iz * iz,
         0.0, k.fy * iz, -k.fy * pc.y() * iz * iz;
    return j;
}

inline void check_determined_pose_only(const BAProblem& problem, const std::vector<int>& free_poses) {
    for (int frame : free_poses) {
        int n_valid = 0;
        std::vector<Eigen::Vector3d> dirs;
        const Pose& pose = problem.poses.at(frame);
        const Eigen::Vector3d center = pose.inverse().translation();
        for (const Observation& obs : problem.observations) {
            if (obs.frame_id != frame || obs.weight <= 0.0) continue;
            const auto lm = problem.landmarks.find(obs.landmark_id);
            if (lm == problem.landmarks.end()) continue;
            const Eigen::Vector3d pc = pose.apply(lm->second.position);
            if (pc.z() <= 1e-9) continue;
            ++n_valid;
            const Eigen::Vector3d dir = (lm->second.position - center).normalized();
            bool distinct = true;
            for (const auto& d : dirs)
                if (d.dot(dir) > 1.0 - 1e-9) { distinct = false; break; }
            if (distinct) dirs.push_back(dir);
        }
        if (n_valid < 6 || dirs.size() < 4)
            throw Underdetermined("frame " + std::to_string(frame) + " has " +
                                  std::to_string(n_valid) + " valid observations over " +
                                  std::to_string(dirs.size()) + " distinct directions");
    }
}

}  // namespace detail

/// Analytic gradient of weighted_cost with respect to one pose's left twist
/// increment, d/d delta cost(exp(delta) * T) at delta = 0.
inline Eigen::Matrix<double, 6, 1> pose_cost_gradient(const BAProblem& problem, int frame) {
    Eigen::Matrix<double, 6, 1> grad = Eigen::Matrix<double, 6, 1>::Zero();
    const Pose& pose = problem.poses.at(frame);
    for (const Observation& obs : problem.observations) {
        if (obs.frame_id != frame || obs.weight <= 0.0) continue;
        const Eigen::Vector3d pc = pose.apply(problem.landmarks.at(obs.landmark_id).position);
        if (pc.z() <= 1e-9) continue;
        const Eigen::Vector2d pix = {problem.intrinsics.fx * pc.x() / pc.z() + problem.intrinsics.cx,
                                     problem.intrinsics.fy * pc.y() / pc.z() + problem.intrinsics.cy};
        const Eigen::Vector2d r = obs.pixel - pix;
        const Eigen::Matrix<double, 2, 3> dpix = detail::projection_jacobian(problem.intrinsics, pc);
        Eigen::Matrix<double, 2, 6> j;
        j.block<2, 3>(0, 0) = dpix * skew(pc);
        j.block<2, 3>(0, 3) = -dpix;
        grad += obs.weight * j.transpose() * r;
    }
    return grad;
}

/// Levenberg-Marquardt over the twist parameterization, with per-residual
/// information Omega_k = w_k * I_2 in the normal equations. Pose increments
/// are applied by left multiplication exp(delta) * T. Observations that lose
/// positive depth during a step are skipped for that iteration only.
inline std::pair<BAProblem, SolveReport> solve(BAProblem problem, const SolveOptions& options = {}) {
    std::vector<int> free_poses;
    for (const auto& [id, p] : problem.poses)
        if (!problem.fixed_poses.count(id)) free_poses.push_back(id);
    std::vector<int> free_landmarks;
    for (const auto& [id, lm] : problem.landmarks)
        if (!problem.fixed_landmarks.count(id)) free_landmarks.push_back(id);

    if (free_poses.empty()) throw Underdetermined("no free pose");
    for (const Observation& obs : problem.observations) {
        if (!problem.poses.count(obs.frame_id) || !problem.landmarks.count(obs.landmark_id))
            throw Underdetermined("observation references unknown frame or landmark");
    }
    if (free_landmarks.empty()) detail::check_determined_pose_only(problem, free_poses);

    std::map<int, int> pose_index, lm_index;
    for (size_t i = 0; i < free_poses.size(); ++i) pose_index[free_poses[i]] = static_cast<int>(i);
    for (size_t i = 0; i < free_landmarks.size(); ++i) lm_index[free_landmarks[i]] = static_cast<int>(i);
    const int n_pose_params = 6 * static_cast<int>(free_poses.size());
    const int dim = n_pose_params + 3 * static_cast<int>(free_landmarks.size());

    SolveReport report;
    report.initial_cost = weighted_cost(problem);
    double cost = report.initial_cost;
    double lambda = options.lm_initial_lambda;

    Eigen::MatrixXd h(dim, dim);
    Eigen::VectorXd g(dim);

    auto apply_step = [&](const BAProblem& base, const Eigen::VectorXd& delta) {
        BAProblem next = base;
        for (int frame : free_poses) {
            const int i = 6 * pose_index[frame];
            Twist xi;
            xi.rotational = delta.segment<3>(i);
            xi.translational = delta.segment<3>(i + 3);
            next.poses[frame] = exp_map(xi) * base.poses.at(frame);
        }
        for (int id : free_landmarks) {
            const int i = n_pose_params + 3 * lm_index[id];
            next.landmarks[id].position = base.landmarks.at(id).position + delta.segment<3>(i);
        }
        return next;
    };

    for (report.iterations = 0; report.iterations < options.max_iterations; ++report.iterations) {
        h.setZero();
        g.setZero();
        report.skipped_observations = 0;

        // Accumulation order is the observation order, independent of any
        // internal parallelism.
        for (const Observation& obs : problem.observations) {
            if (obs.weight <= 0.0) continue;
            const Pose& pose = problem.poses.at(obs.frame_id);
            const Landmark& lm = problem.landmarks.at(obs.landmark_id);
            const Eigen::Vector3d pc = pose.apply(lm.position);
            if (pc.z() <= 1e-9) {
                ++report.skipped_observations;
                continue;
            }
            const Eigen::Vector2d pix = {problem.intrinsics.fx * pc.x() / pc.z() + problem.intrinsics.cx,
                                         problem.intrinsics.fy * pc.y() / pc.z() + problem.intrinsics.cy};
            const Eigen::Vector2d r = obs.pixel - pix;
            const Eigen::Matrix<double, 2, 3> dpix = detail::projection_jacobian(problem.intrinsics, pc);

            // Residual Jacobians: left perturbation exp(delta) * T gives
            // d pc / d(rot) = -[pc]x, d pc / d(trans) = I; landmark gives R.
            const bool pose_free = pose_index.count(obs.frame_id) > 0;
            const bool lm_free = lm_index.count(obs.landmark_id) > 0;
            Eigen::Matrix<double, 2, 6> j_pose;
            Eigen::Matrix<double, 2, 3> j_lm;
            if (pose_free) {
                j_pose.block<2, 3>(0, 0) = dpix * skew(pc);  // -dpix * (-[pc]x) from r = U - pix
                j_pose.block<2, 3>(0, 3) = -dpix;
            }
            if (lm_free) j_lm = -dpix * pose.rotation().toRotationMatrix();

            const double w = obs.weight;
            if (pose_free) {
                const int pi = 6 * pose_index[obs.frame_id];
                h.block<6, 6>(pi, pi) += w * j_pose.transpose() * j_pose;
                g.segment<6>(pi) += -w * j_pose.transpose() * r;
            }
            if (lm_free) {
                const int li = n_pose_params + 3 * lm_index[obs.landmark_id];
                h.block<3, 3>(li, li) += w * j_lm.transpose() * j_lm;
                g.segment<3>(li) += -w * j_lm.transpose() * r;
                if (pose_free) {
                    const int pi = 6 * pose_index[obs.frame_id];
                    const Eigen::Matrix<double, 6, 3> cross = w * j_pose.transpose() * j_lm;
                    h.block<6, 3>(pi, li) += cross;
                    h.block<3, 6>(li, pi) += cross.transpose();
                }
            }
        }

        if (g.lpNorm<Eigen::Infinity>() < options.gradient_tol) {
            report.converged = true;
            report.termination = Termination::gradient_small;
            break;
        }

        bool accepted = false;
        while (!accepted) {
            Eigen::MatrixXd damped = h;
            damped.diagonal() += lambda * h.diagonal().cwiseMax(1e-12);
            const Eigen::VectorXd delta = damped.ldlt().solve(g);

            BAProblem candidate = apply_step(problem, delta);
            const double new_cost = weighted_cost(candidate);
            if (new_cost <= cost) {
                accepted = true;
                problem = std::move(candidate);
                lambda *= 0.5;
                const double decrease = cost - new_cost;
                cost = new_cost;
                if (delta.norm() < options.step_tol) {
                    report.converged = true;
                    report.termination = Termination::step_small;
                } else if (decrease <= 1e-14 * std::max(cost, 1.0)) {
                    report.converged = true;
                    report.termination = Termination::cost_stalled;
                }
            } else {
                if (delta.norm() < options.step_tol) {
                    // the model proposes no meaningful step; we are at a
                    // numerical stationary point
                    accepted = true;
                    report.converged = true;
                    report.termination = Termination::step_small;
                    break;
                }
                lambda *= 4.0;
                if (lambda > 1e12) throw SolverDiverged();
            }
        }
        if (report.converged) {
            ++report.iterations;
            break;
        }
    }

    report.final_cost = cost;
    if (!report.converged) report.termination = Termination::max_iterations;
    return {std::move(problem), report};
}

// ---------------------------------------------------------------------------
// Line-oriented text format:
//   CAMERA fx fy cx cy width height
//   POSE id qw qx qy qz tx ty tz [FIXED]
//   LM id x y z
//   OBS frame lm u v weight
// Whitespace separated, '#' comments, floats with 9 significant digits.

namespace detail {
inline std::string fmt9(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}
}  // namespace detail

inline void write_problem(const BAProblem& problem, std::ostream& out) {
    using detail::fmt9;
    const CameraIntrinsics& k = problem.intrinsics;
    out << "CAMERA " << fmt9(k.fx) << ' ' << fmt9(k.fy) << ' ' << fmt9(k.cx) << ' ' << fmt9(k.cy)
        << ' ' << k.width << ' ' << k.height << '\n';
    for (const auto& [id, p] : problem.poses) {
        const Eigen::Quaterniond& q = p.rotation();
        out << "POSE " << id << ' ' << fmt9(q.w()) << ' ' << fmt9(q.x()) << ' ' << fmt9(q.y()) << ' '
            << fmt9(q.z()) << ' ' << fmt9(p.translation().x()) << ' ' << fmt9(p.translation().y())
            << ' ' << fmt9(p.translation().z());
        if (problem.fixed_poses.count(id)) out << " FIXED";
        out << '\n';
    }
    for (const auto& [id, lm] : problem.landmarks)
        out << "LM " << id << ' ' << fmt9(lm.position.x()) << ' ' << fmt9(lm.position.y()) << ' '
            << fmt9(lm.position.z()) << '\n';
    for (const Observation& obs : problem.observations)
        out << "OBS " << obs.frame_id << ' ' << obs.landmark_id << ' ' << fmt9(obs.pixel.x()) << ' '
            << fmt9(obs.pixel.y()) << ' ' << fmt9(obs.weight) << '\n';
}

inline BAProblem read_problem(std::istream& in) {
    BAProblem problem;
    bool have_camera = false;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ss(line);
        std::string tag;
        if (!(ss >> tag)) continue;
        if (tag == "CAMERA") {
            double fx, fy, cx, cy;
            int w, h;
            if (!(ss >> fx >> fy >> cx >> cy >> w >> h)) throw ParseError(line_no, "bad CAMERA line");
            problem.intrinsics = CameraIntrinsics(fx, fy, cx, cy, w, h);
            have_camera = true;
        } else if (tag == "POSE") {
            int id;
            double qw, qx, qy, qz, tx, ty, tz;
            if (!(ss >> id >> qw >> qx >> qy >> qz >> tx >> ty >> tz))
                throw ParseError(line_no, "bad POSE line");
            problem.poses[id] = Pose(Eigen::Quaterniond(qw, qx, qy, qz), {tx, ty, tz});
            std::string flag;
            if (ss >> flag) {
                if (flag != "FIXED") throw ParseError(line_no, "unexpected token '" + flag + "'");
                problem.fixed_poses.insert(id);
            }
        } else if (tag == "LM") {
            int id;
            double x, y, z;
            if (!(ss >> id >> x >> y >> z)) throw ParseError(line_no, "bad LM line");
            problem.landmarks[id] = {id, {x, y, z}};
        } else if (tag == "OBS") {
            Observation obs;
            if (!(ss >> obs.frame_id >> obs.landmark_id >> obs.pixel.x() >> obs.pixel.y() >> obs.weight))
                throw ParseError(line_no, "bad OBS line");
            problem.observations.push_back(obs);
        } else {
            throw ParseError(line_no, "unknown record '" + tag + "'");
        }
    }
    if (!have_camera) throw ParseError(line_no, "missing CAMERA header");
    return problem;
}

}  // namespace pmba

#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cmath>

#include "pmba/errors.hpp"

namespace pmba {

/// Pinhole camera intrinsics. No distortion model.
struct CameraIntrinsics {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 1;
    int height = 1;

    CameraIntrinsics() = default;
    CameraIntrinsics(double fx_, double fy_, double cx_, double cy_, int w, int h)
        : fx(fx_), fy(fy_), cx(cx_), cy(cy_), width(w), height(h) {
        if (fx <= 0.0 || fy <= 0.0) throw std::invalid_argument("focal lengths must be positive");
        if (width < 1 || height < 1) throw std::invalid_argument("image size must be at least 1x1");
    }
};

/// se(3) tangent coordinates. Rotational part is an axis-angle vector in
/// radians, translational part in meters.
struct Twist {
    Eigen::Vector3d rotational = Eigen::Vector3d::Zero();
    Eigen::Vector3d translational = Eigen::Vector3d::Zero();

    double norm() const { return std::sqrt(rotational.squaredNorm() + translational.squaredNorm()); }
};

/// Rigid transform on SE(3), stored as unit quaternion + translation.
/// The quaternion is renormalized on construction.
class Pose {
  public:
    Pose() : q_(Eigen::Quaterniond::Identity()), t_(Eigen::Vector3d::Zero()) {}
    Pose(const Eigen::Quaterniond& q, const Eigen::Vector3d& t) : q_(q.normalized()), t_(t) {}

    const Eigen::Quaterniond& rotation() const { return q_; }
    const Eigen::Vector3d& translation() const { return t_; }

    Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return q_ * p + t_; }

    Pose operator*(const Pose& other) const { return Pose(q_ * other.q_, q_ * other.t_ + t_); }

    Pose inverse() const {
        Eigen::Quaterniond qi = q_.conjugate();
        return Pose(qi, -(qi * t_));
    }

    /// Rotation angle in [0, pi].
    double angle() const {
        double w = std::min(1.0, std::abs(q_.w()));
        return 2.0 * std::acos(w);
    }

  private:
    Eigen::Quaterniond q_;
    Eigen::Vector3d t_;
};

inline Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
    Eigen::Matrix3d m;
    m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
    return m;
}

/// SE(3) exponential. Valid for rotation angles below pi.
inline Pose exp_map(const Twist& xi) {
    const Eigen::Vector3d& phi = xi.rotational;
    const double theta = phi.norm();
    const Eigen::Matrix3d hat = skew(phi);

    Eigen::Matrix3d v_mat;
    Eigen::Quaterniond q;
    if (theta < 1e-9) {
        q = Eigen::Quaterniond(Eigen::Matrix3d(Eigen::Matrix3d::Identity() + hat));
        v_mat = Eigen::Matrix3d::Identity() + 0.5 * hat;
    } else {
        q = Eigen::Quaterniond(Eigen::AngleAxisd(theta, phi / theta));
        const double t2 = theta * theta;
        v_mat = Eigen::Matrix3d::Identity() + ((1.0 - std::cos(theta)) / t2) * hat +
                ((theta - std::sin(theta)) / (t2 * theta)) * hat * hat;
    }
    return Pose(q, v_mat * xi.translational);
}

/// Inverse of exp_map. Throws SingularRotation at angle pi.
inline Twist log_map(const Pose& p) {
    Eigen::Quaterniond q = p.rotation();
    if (q.w() < 0.0) q.coeffs() = -q.coeffs();  // canonical hemisphere, angle in [0, pi]
    const double vec_norm = q.vec().norm();
    const double theta = 2.0 * std::atan2(vec_norm, q.w());
    if (theta > M_PI - 1e-9) throw SingularRotation();

    Twist xi;
    if (vec_norm > 1e-12) {
        xi.rotational = (theta / vec_norm) * q.vec();
    } else {
        xi.rotational = 2.0 * q.vec();  // first-order: q ~ (1, phi/2)
    }

    const Eigen::Matrix3d hat = skew(xi.rotational);
    Eigen::Matrix3d v_inv;
    if (theta < 1e-9) {
        v_inv = Eigen::Matrix3d::Identity() - 0.5 * hat + (1.0 / 12.0) * hat * hat;
    } else {
        const double half = 0.5 * theta;
        const double coeff = (1.0 - half * std::cos(half) / std::sin(half)) / (theta * theta);
        v_inv = Eigen::Matrix3d::Identity() - 0.5 * hat + coeff * hat * hat;
    }
    xi.translational = v_inv * p.translation();
    return xi;
}

struct Projection {
    Eigen::Vector2d pixel;
    double depth;
};

/// Projects a world point through pose T (world -> camera) and intrinsics K.
/// Throws NonPositiveDepth when the camera-frame depth is <= 1e-9.
inline Projection project(const CameraIntrinsics& k, const Pose& t, const Eigen::Vector3d& p_world) {
    const Eigen::Vector3d pc = t.apply(p_world);
    if (pc.z() <= 1e-9) throw NonPositiveDepth(pc.z());
    return {{k.fx * pc.x() / pc.z() + k.cx, k.fy * pc.y() / pc.z() + k.cy}, pc.z()};
}

}  // namespace pmba

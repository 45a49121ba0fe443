#include <catch2/catch_amalgamated.hpp>

#include "pmba/geometry.hpp"
#include "pmba/rng.hpp"

using namespace pmba;

namespace {
Twist random_twist(Rng& rng, double max_rot) {
    Twist xi;
    Eigen::Vector3d axis = {rng.gauss(), rng.gauss(), rng.gauss()};
    axis.normalize();
    xi.rotational = rng.uniform(0.0, max_rot) * axis;
    xi.translational = {rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)};
    return xi;
}

double twist_diff(const Twist& a, const Twist& b) {
    return std::sqrt((a.rotational - b.rotational).squaredNorm() +
                     (a.translational - b.translational).squaredNorm());
}
}  // namespace

TEST_CASE("exp_map of zero twist is identity") {
    const Pose p = exp_map(Twist{});
    CHECK(p.angle() == Catch::Approx(0.0).margin(1e-15));
    CHECK(p.translation().norm() == Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("exp_map of pure z rotation is a yaw") {
    Twist xi;
    xi.rotational = {0.0, 0.0, M_PI / 2.0};
    const Pose p = exp_map(xi);
    CHECK(p.angle() == Catch::Approx(M_PI / 2.0).margin(1e-12));
    CHECK(p.translation().norm() == Catch::Approx(0.0).margin(1e-15));
    // rotates x onto y
    CHECK((p.apply({1, 0, 0}) - Eigen::Vector3d(0, 1, 0)).norm() < 1e-12);
}

TEST_CASE("exp/log round trip on a fixed twist") {
    Twist xi;
    xi.rotational = {0.3, -0.2, 0.1};
    xi.translational = {1, 2, 3};
    CHECK(twist_diff(log_map(exp_map(xi)), xi) < 1e-9);
}

TEST_CASE("log_map of identity is the zero twist") {
    const Twist xi = log_map(Pose{});
    CHECK(xi.norm() == Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("log_map of a pure translation") {
    const Pose p(Eigen::Quaterniond::Identity(), {4, 5, 6});
    const Twist xi = log_map(p);
    CHECK(xi.rotational.norm() == Catch::Approx(0.0).margin(1e-15));
    CHECK((xi.translational - Eigen::Vector3d(4, 5, 6)).norm() < 1e-12);
}

TEST_CASE("log_map rejects rotation angle pi") {
    Twist xi;
    xi.rotational = {0.0, 0.0, M_PI};
    CHECK_THROWS_AS(log_map(exp_map(xi)), SingularRotation);
}

TEST_CASE("exp/log round trip over 1000 random twists") {
    Rng rng(42);
    for (int i = 0; i < 1000; ++i) {
        const Twist xi = random_twist(rng, 3.0);
        CHECK(twist_diff(log_map(exp_map(xi)), xi) < 1e-9);
    }
}

TEST_CASE("compose with inverse is identity") {
    Rng rng(1);
    for (int i = 0; i < 100; ++i) {
        const Pose p = exp_map(random_twist(rng, 3.0));
        const Pose id = p * p.inverse();
        CHECK(id.angle() < 1e-9);
        CHECK(id.translation().norm() < 1e-9);
    }
}

TEST_CASE("composition is associative") {
    Rng rng(2);
    for (int i = 0; i < 100; ++i) {
        const Pose p = exp_map(random_twist(rng, 3.0));
        const Pose q = exp_map(random_twist(rng, 3.0));
        const Pose r = exp_map(random_twist(rng, 3.0));
        const Pose a = (p * q) * r;
        const Pose b = p * (q * r);
        CHECK((a.translation() - b.translation()).norm() < 1e-9);
        CHECK((a * b.inverse()).angle() < 1e-9);
    }
}

TEST_CASE("project: unit camera on the optical axis") {
    const CameraIntrinsics k(1, 1, 0, 0, 1, 1);
    const Projection pr = project(k, Pose{}, {0, 0, 1});
    CHECK(pr.pixel.norm() == Catch::Approx(0.0).margin(1e-15));
    CHECK(pr.depth == Catch::Approx(1.0));
}

TEST_CASE("project: hand-evaluated pinhole formula") {
    const CameraIntrinsics k(500, 500, 320, 240, 640, 480);
    const Projection pr = project(k, Pose{}, {0.1, -0.2, 2.0});
    CHECK(pr.pixel.x() == Catch::Approx(345.0).margin(1e-12));
    CHECK(pr.pixel.y() == Catch::Approx(190.0).margin(1e-12));
    CHECK(pr.depth == Catch::Approx(2.0));
}

TEST_CASE("project rejects points behind the camera") {
    const CameraIntrinsics k(1, 1, 0, 0, 1, 1);
    CHECK_THROWS_AS(project(k, Pose{}, Eigen::Vector3d{0, 0, -1}), NonPositiveDepth);
    CHECK_THROWS_AS(project(k, Pose{}, Eigen::Vector3d{0, 0, 0}), NonPositiveDepth);
}

TEST_CASE("perspective division: camera-frame rescaling keeps the pixel") {
    const CameraIntrinsics k(500, 500, 320, 240, 640, 480);
    Rng rng(3);
    for (int i = 0; i < 100; ++i) {
        const Eigen::Vector3d p = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0.5, 5)};
        const double lambda = rng.uniform(0.1, 10.0);
        const Projection a = project(k, Pose{}, p);
        const Projection b = project(k, Pose{}, lambda * p);
        CHECK((a.pixel - b.pixel).norm() < 1e-9);
        CHECK(b.depth == Catch::Approx(lambda * a.depth).epsilon(1e-12));
    }
}

TEST_CASE("quaternion is renormalized on construction") {
    const Pose p(Eigen::Quaterniond(2.0, 0.0, 0.0, 0.0), {0, 0, 0});
    CHECK(p.rotation().norm() == Catch::Approx(1.0).margin(1e-9));
}

#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "pmba/eval.hpp"
#include "pmba/simulator.hpp"

using namespace pmba;

namespace {

SceneConfig small_config(std::uint64_t seed) {
    SceneConfig cfg;
    cfg.seed = seed;
    cfg.n_frames = 10;
    cfg.n_static_landmarks = 100;
    cfg.n_dynamic_landmarks = 25;
    cfg.pixel_noise_sigma = 1.0;
    cfg.init_twist_sigma = 0.05;
    return cfg;
}

std::string serialize_scene(const SyntheticScene& scene) {
    std::ostringstream out;
    write_tum_trajectory(scene.ground_truth, out);
    write_detections(scene.detections, out);
    write_problem(make_joint_problem(scene), out);
    return out.str();
}

double pose_error(const Pose& estimate_w2c, const Pose& gt_w2c) {
    const Pose d = estimate_w2c * gt_w2c.inverse();
    return std::max(d.angle(), d.translation().norm());
}

double mean_frame_error(const SyntheticScene& scene) {
    double sum = 0.0;
    int n = 0;
    for (int f = 0; f < scene.config.n_frames; ++f) {
        const auto [solved, report] = solve(make_problem(scene, f));
        sum += pose_error(solved.poses.at(f), scene.world_to_camera[f]);
        ++n;
    }
    return sum / n;
}

double mean_frame_error_weighted(const SyntheticScene& scene) {
    double sum = 0.0;
    int n = 0;
    for (int f = 0; f < scene.config.n_frames; ++f) {
        BAProblem problem = make_problem(scene, f);
        std::map<int, ProbabilityMap> maps;
        maps.emplace(f, build_map(scene.detections[f].detections, scene.config.intrinsics.width,
                                  scene.config.intrinsics.height));
        problem = attach_weights(std::move(problem), maps);
        const auto [solved, report] = solve(problem);
        sum += pose_error(solved.poses.at(f), scene.world_to_camera[f]);
        ++n;
    }
    return sum / n;
}

}  // namespace

TEST_CASE("same seed and config give bit-identical scenes") {
    const SceneConfig cfg = small_config(123);
    CHECK(serialize_scene(generate(cfg)) == serialize_scene(generate(cfg)));
}

TEST_CASE("different seeds give different scenes") {
    CHECK(serialize_scene(generate(small_config(1))) != serialize_scene(generate(small_config(2))));
}

TEST_CASE("observations project inside the frustum before noise") {
    const SyntheticScene scene = generate(small_config(5));
    const CameraIntrinsics& k = scene.config.intrinsics;
    for (int f = 0; f < scene.config.n_frames; ++f) {
        for (const Observation& obs : scene.observations[f]) {
            Eigen::Vector3d p;
            if (obs.landmark_id < scene.dynamic_id_base())
                p = scene.static_landmarks[obs.landmark_id];
            else
                p = scene.dynamic_position(obs.landmark_id - scene.dynamic_id_base(), f);
            const Projection pr = project(k, scene.world_to_camera[f], p);
            CHECK(pr.depth > 0.0);
            CHECK(pr.pixel.x() >= 0.0);
            CHECK(pr.pixel.x() <= k.width - 1);
            CHECK(pr.pixel.y() >= 0.0);
            CHECK(pr.pixel.y() <= k.height - 1);
        }
    }
}

TEST_CASE("noiseless static scene solves to machine precision from ground truth") {
    SceneConfig cfg = small_config(6);
    cfg.n_dynamic_landmarks = 0;
    cfg.pixel_noise_sigma = 0.0;
    cfg.init_twist_sigma = 0.0;  // start at ground truth
    const SyntheticScene scene = generate(cfg);
    for (int f = 0; f < cfg.n_frames; ++f) {
        const auto [solved, report] = solve(make_problem(scene, f));
        CHECK(report.converged);
        CHECK(report.final_cost <= 1e-18);
    }
}

TEST_CASE("ground truth trajectory has zero ATE against itself") {
    const SyntheticScene scene = generate(small_config(7));
    const auto [series, summary] = ate(scene.ground_truth, scene.ground_truth);
    CHECK(summary.rmse == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("full coverage without jitter puts every static pixel inside its cluster box") {
    SceneConfig cfg = small_config(8);
    cfg.detection_coverage = 1.0;
    cfg.box_jitter_sigma = 0.0;
    const SyntheticScene scene = generate(cfg);
    for (int f = 0; f < cfg.n_frames; ++f) {
        for (const Observation& obs : scene.observations[f]) {
            if (obs.landmark_id >= scene.dynamic_id_base()) continue;
            const int cluster = scene.cluster_of[obs.landmark_id];
            const std::string label = "cluster_" + std::to_string(cluster);
            bool found = false;
            for (const Detection& det : scene.detections[f].detections) {
                if (det.label != label) continue;
                found = true;
                CHECK(det.box.contains(obs.pixel));
            }
            CHECK(found);
        }
    }
}

TEST_CASE("dynamic landmarks never receive detection boxes") {
    const SyntheticScene scene = generate(small_config(9));
    const int n_clusters = scene.config.n_clusters();
    for (const DetectionFrame& frame : scene.detections)
        CHECK(frame.detections.size() <= static_cast<size_t>(n_clusters));
}

TEST_CASE("contaminate_as_static is a no-op without dynamic landmarks") {
    SceneConfig cfg = small_config(10);
    cfg.n_dynamic_landmarks = 0;
    const SyntheticScene scene = generate(cfg);
    const SyntheticScene variant = contaminate_as_static(scene);
    CHECK_FALSE(variant.dynamic_as_static);
    CHECK(serialize_scene(scene) == serialize_scene(variant));
}

TEST_CASE("empty worlds are rejected") {
    SceneConfig cfg = small_config(11);
    cfg.n_static_landmarks = 0;
    cfg.n_dynamic_landmarks = 0;
    CHECK_THROWS_AS(generate(cfg), EmptyScene);
}

TEST_CASE("contamination hurts the uniform solve on paired seeds") {
    int worse = 0;
    const int n_seeds = 25;
    for (int seed = 0; seed < n_seeds; ++seed) {
        SceneConfig dyn_cfg = small_config(1000 + seed);
        const SyntheticScene dyn = contaminate_as_static(generate(dyn_cfg));
        SceneConfig static_cfg = dyn_cfg;
        static_cfg.n_dynamic_landmarks = 0;
        const SyntheticScene stat = generate(static_cfg);
        if (mean_frame_error(dyn) > mean_frame_error(stat)) ++worse;
    }
    CHECK(worse >= n_seeds * 95 / 100);
}

TEST_CASE("probability-map weights recover part of the contamination loss") {
    int better = 0;
    const int n_seeds = 25;
    for (int seed = 0; seed < n_seeds; ++seed) {
        const SyntheticScene scene = contaminate_as_static(generate(small_config(2000 + seed)));
        if (mean_frame_error_weighted(scene) < mean_frame_error(scene)) ++better;
    }
    CHECK(better >= n_seeds * 95 / 100);
}

TEST_CASE("scene config parsing") {
    std::istringstream in(
        "# test config\n"
        "seed = 42\n"
        "n_frames = 12\n"
        "n_static_landmarks = 80\n"
        "n_dynamic_landmarks = 5\n"
        "trajectory = arc\n"
        "pixel_noise_sigma = 0.5\n"
        "width = 320\n"
        "height = 240\n"
        "cx = 159.5\n"
        "cy = 119.5\n");
    const SceneConfig cfg = parse_scene_config(in);
    CHECK(cfg.seed == 42);
    CHECK(cfg.n_frames == 12);
    CHECK(cfg.trajectory == TrajectoryKind::arc);
    CHECK(cfg.intrinsics.width == 320);
    CHECK(cfg.intrinsics.cy == Catch::Approx(119.5));

    std::istringstream bad("nonsense = 1\n");
    CHECK_THROWS_AS(parse_scene_config(bad), ParseError);
    std::istringstream bad2("trajectory = spiral\n");
    CHECK_THROWS_AS(parse_scene_config(bad2), ParseError);
}

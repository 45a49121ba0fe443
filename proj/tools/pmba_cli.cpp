// Command-line front end: simulate scenes, render probability maps, solve
// weighted BA problems, evaluate trajectories.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "pmba/ba.hpp"
#include "pmba/dataset.hpp"
#include "pmba/eval.hpp"
#include "pmba/geometry.hpp"
#include "pmba/probmap.hpp"
#include "pmba/simulator.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

class StageTimer {
  public:
    void record(const std::string& stage, double ms) { timings_[stage] = ms; }

    template <typename F>
    auto time(const std::string& stage, F&& f) {
        const auto start = std::chrono::steady_clock::now();
        if constexpr (std::is_void_v<decltype(f())>) {
            f();
            record(stage, elapsed_ms(start));
        } else {
            auto result = f();
            record(stage, elapsed_ms(start));
            return result;
        }
    }

    json to_json() const {
        json j = json::object();
        for (const auto& [k, v] : timings_) j[k] = v;
        return j;
    }

  private:
    static double elapsed_ms(std::chrono::steady_clock::time_point start) {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
            .count();
    }
    std::map<std::string, double> timings_;
};

// All outputs go through temp-then-rename so a failed stage leaves nothing.
void write_file_atomic(const fs::path& path, const std::string& content) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        out << content;
    }
    fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_manifest(const fs::path& path, const json& fixed, const StageTimer& timer) {
    json manifest = fixed;
    manifest["tool"] = "pmba";
    manifest["version"] = kVersion;
    manifest["timings_ms"] = timer.to_json();
    write_file_atomic(path, manifest.dump(2) + "\n");
}

json config_echo(const pmba::SceneConfig& cfg) {
    const char* traj = cfg.trajectory == pmba::TrajectoryKind::orbit  ? "orbit"
                       : cfg.trajectory == pmba::TrajectoryKind::line ? "line"
                                                                      : "arc";
    return {{"seed", cfg.seed},
            {"n_frames", cfg.n_frames},
            {"n_static_landmarks", cfg.n_static_landmarks},
            {"n_dynamic_landmarks", cfg.n_dynamic_landmarks},
            {"pixel_noise_sigma", cfg.pixel_noise_sigma},
            {"dynamic_velocity_sigma", cfg.dynamic_velocity_sigma},
            {"trajectory", traj},
            {"radius", cfg.radius},
            {"length", cfg.length},
            {"detection_coverage", cfg.detection_coverage},
            {"box_jitter_sigma", cfg.box_jitter_sigma},
            {"init_twist_sigma", cfg.init_twist_sigma},
            {"fps", cfg.fps},
            {"intrinsics",
             {{"fx", cfg.intrinsics.fx},
              {"fy", cfg.intrinsics.fy},
              {"cx", cfg.intrinsics.cx},
              {"cy", cfg.intrinsics.cy},
              {"width", cfg.intrinsics.width},
              {"height", cfg.intrinsics.height}}}};
}

pmba::SceneConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path.string());
    return pmba::parse_scene_config(in);
}

struct SimOutputs {
    std::string trajectory;
    std::string detections;
    std::string problem;
};

SimOutputs simulate_to_strings(const pmba::SceneConfig& cfg) {
    const pmba::SyntheticScene scene = pmba::contaminate_as_static(pmba::generate(cfg));
    SimOutputs out;
    {
        std::ostringstream ss;
        pmba::write_tum_trajectory(scene.ground_truth, ss);
        out.trajectory = ss.str();
    }
    {
        std::ostringstream ss;
        pmba::write_detections(scene.detections, ss);
        out.detections = ss.str();
    }
    {
        std::ostringstream ss;
        pmba::write_problem(pmba::make_joint_problem(scene), ss);
        out.problem = ss.str();
    }
    return out;
}

std::map<int, pmba::ProbabilityMap> build_maps_for_problem(
    const pmba::BAProblem& problem, const std::vector<pmba::DetectionFrame>& det_frames) {
    std::map<int, pmba::ProbabilityMap> maps;
    for (const auto& [frame_id, pose] : problem.poses) {
        if (frame_id < 0 || frame_id >= static_cast<int>(det_frames.size()))
            throw std::runtime_error("no detection frame for pose id " + std::to_string(frame_id));
        const pmba::DetectionFrame& df = det_frames[frame_id];
        maps.emplace(frame_id, pmba::build_map(df.detections, df.width, df.height));
    }
    return maps;
}

pmba::Trajectory solved_trajectory(const pmba::BAProblem& problem, double fps) {
    pmba::Trajectory traj;
    for (const auto& [frame_id, pose] : problem.poses)
        traj.push_back({frame_id / fps, pose.inverse()});
    return traj;
}

struct SolveResult {
    std::string trajectory_text;
    pmba::SolveReport report;
};

SolveResult solve_problem_text(const std::string& problem_text,
                               const std::vector<pmba::DetectionFrame>* det_frames, double fps,
                               bool full_ba, StageTimer& timer, const std::string& stage_prefix) {
    std::istringstream pin(problem_text);
    pmba::BAProblem problem = pmba::read_problem(pin);
    if (full_ba) {
        if (!problem.poses.empty()) problem.fixed_poses.insert(problem.poses.begin()->first);
    } else {
        problem.fix_all_landmarks();
    }
    if (det_frames) {
        const auto maps = timer.time(stage_prefix + "probmap",
                                     [&] { return build_maps_for_problem(problem, *det_frames); });
        problem = pmba::attach_weights(std::move(problem), maps);
    }
    SolveResult result;
    auto solved = timer.time(stage_prefix + "solve", [&] { return pmba::solve(problem); });
    result.report = solved.second;
    std::ostringstream ss;
    pmba::write_tum_trajectory(solved_trajectory(solved.first, fps), ss);
    result.trajectory_text = ss.str();
    return result;
}

json report_to_json(const pmba::SolveReport& r) {
    return {{"iterations", r.iterations},
            {"initial_cost", r.initial_cost},
            {"final_cost", r.final_cost},
            {"converged", r.converged},
            {"termination", pmba::to_string(r.termination)}};
}

struct EvalOutputs {
    pmba::MetricSummary ate_summary;
    pmba::MetricSummary rpe_trans_summary;
    pmba::MetricSummary rpe_rot_summary;
};

EvalOutputs eval_to_dir(const pmba::Trajectory& ref, const pmba::Trajectory& est, bool with_scale,
                        int rpe_delta, double max_dt, const fs::path& out_dir,
                        const std::string& prefix = "") {
    fs::create_directories(out_dir);
    EvalOutputs result;
    const auto [ate_series, ate_summary] = pmba::ate(ref, est, max_dt, with_scale);
    const pmba::RpeResult rpe_result = pmba::rpe(ref, est, rpe_delta, max_dt);
    result.ate_summary = ate_summary;
    result.rpe_trans_summary = rpe_result.translation;
    result.rpe_rot_summary = rpe_result.rotation;

    std::ostringstream s1;
    pmba::write_series_csv(ate_series, s1);
    write_file_atomic(out_dir / (prefix + "ate_series.csv"), s1.str());
    std::ostringstream s2;
    pmba::write_series_csv(rpe_result.translation_series, s2);
    write_file_atomic(out_dir / (prefix + "rpe_translation_series.csv"), s2.str());
    std::ostringstream s3;
    pmba::write_series_csv(rpe_result.rotation_series, s3);
    write_file_atomic(out_dir / (prefix + "rpe_rotation_series.csv"), s3.str());
    std::ostringstream s4;
    pmba::write_summary_csv("ate", ate_summary, s4, true);
    pmba::write_summary_csv("rpe_translation", rpe_result.translation, s4, false);
    pmba::write_summary_csv("rpe_rotation", rpe_result.rotation, s4, false);
    write_file_atomic(out_dir / (prefix + "summary.csv"), s4.str());
    return result;
}

pmba::Trajectory load_trajectory(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open trajectory " + path.string());
    return pmba::read_tum_trajectory(in);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"probability-map weighted bundle adjustment pipeline"};
    app.require_subcommand(1);

    // simulate
    auto* sim = app.add_subcommand("simulate", "generate a synthetic scene");
    std::string sim_config, sim_out;
    sim->add_option("--config", sim_config, "scene config file")->required();
    sim->add_option("--out", sim_out, "output directory")->required();

    // probmap
    auto* pm = app.add_subcommand("probmap", "render a probability map as PGM");
    std::string pm_dets, pm_out;
    double pm_frame = 0.0;
    pm->add_option("--detections", pm_dets, "detection JSON-lines file")->required();
    pm->add_option("--frame", pm_frame, "frame timestamp")->required();
    pm->add_option("--out", pm_out, "output PGM path")->required();

    // solve
    auto* sol = app.add_subcommand("solve", "solve a weighted BA problem");
    std::string sol_problem, sol_dets, sol_out, sol_manifest;
    bool sol_uniform = false, sol_full = false;
    double sol_fps = 30.0;
    sol->add_option("--problem", sol_problem, "BA problem file")->required();
    sol->add_option("--detections", sol_dets, "detection JSON-lines file");
    sol->add_flag("--uniform-weights", sol_uniform, "keep all weights at 1");
    sol->add_flag("--full-ba", sol_full, "free landmarks, anchor the first pose");
    sol->add_option("--fps", sol_fps, "frame rate used to reconstruct timestamps");
    sol->add_option("--out", sol_out, "estimated trajectory output")->required();
    sol->add_option("--manifest", sol_manifest, "manifest JSON output");

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate a trajectory against a reference");
    std::string ev_ref, ev_est, ev_out;
    bool ev_scale = false;
    int ev_delta = 1;
    double ev_max_dt = 0.02;
    ev->add_option("--ref", ev_ref, "reference trajectory (TUM)")->required();
    ev->add_option("--est", ev_est, "estimated trajectory (TUM)")->required();
    ev->add_flag("--scale", ev_scale, "similarity alignment (monocular)");
    ev->add_option("--rpe-delta", ev_delta, "RPE frame gap");
    ev->add_option("--max-dt", ev_max_dt, "association window in seconds");
    ev->add_option("--out", ev_out, "output CSV directory")->required();

    // pipeline
    auto* pipe = app.add_subcommand("pipeline", "simulate, solve weighted + uniform, compare");
    std::string pipe_config, pipe_out;
    pipe->add_option("--config", pipe_config, "scene config file")->required();
    pipe->add_option("--out", pipe_out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        StageTimer timer;
        if (*sim) {
            const pmba::SceneConfig cfg = load_config(sim_config);
            const SimOutputs out = timer.time("simulate", [&] { return simulate_to_strings(cfg); });
            fs::create_directories(sim_out);
            write_file_atomic(fs::path(sim_out) / "groundtruth.txt", out.trajectory);
            write_file_atomic(fs::path(sim_out) / "detections.jsonl", out.detections);
            write_file_atomic(fs::path(sim_out) / "problem.txt", out.problem);
            write_manifest(fs::path(sim_out) / "manifest.json",
                           {{"command", "simulate"},
                            {"config", config_echo(cfg)},
                            {"seed", cfg.seed},
                            {"inputs", {{"config", sim_config}}},
                            {"outputs",
                             {{"trajectory", (fs::path(sim_out) / "groundtruth.txt").string()},
                              {"detections", (fs::path(sim_out) / "detections.jsonl").string()},
                              {"problem", (fs::path(sim_out) / "problem.txt").string()}}}},
                           timer);
        } else if (*pm) {
            std::istringstream din(read_file(pm_dets));
            const auto frames = pmba::read_detections(din);
            if (frames.empty()) throw std::runtime_error("detection file has no frames");
            const auto best = std::min_element(frames.begin(), frames.end(),
                                               [&](const auto& a, const auto& b) {
                                                   return std::abs(a.timestamp - pm_frame) <
                                                          std::abs(b.timestamp - pm_frame);
                                               });
            const std::string pgm = timer.time("probmap", [&] {
                return pmba::render_pgm(pmba::build_map(best->detections, best->width, best->height));
            });
            write_file_atomic(pm_out, pgm);
        } else if (*sol) {
            const std::string problem_text = read_file(sol_problem);
            std::vector<pmba::DetectionFrame> det_frames;
            const bool weighted = !sol_dets.empty() && !sol_uniform;
            if (weighted) {
                std::istringstream din(read_file(sol_dets));
                det_frames = pmba::read_detections(din);
            }
            const SolveResult result = solve_problem_text(
                problem_text, weighted ? &det_frames : nullptr, sol_fps, sol_full, timer, "");
            write_file_atomic(sol_out, result.trajectory_text);
            if (!sol_manifest.empty())
                write_manifest(sol_manifest,
                               {{"command", "solve"},
                                {"inputs", {{"problem", sol_problem}, {"detections", sol_dets}}},
                                {"outputs", {{"trajectory", sol_out}}},
                                {"weighted", weighted},
                                {"report", report_to_json(result.report)}},
                               timer);
        } else if (*ev) {
            const pmba::Trajectory ref = load_trajectory(ev_ref);
            const pmba::Trajectory est = load_trajectory(ev_est);
            timer.time("eval", [&] {
                return eval_to_dir(ref, est, ev_scale, ev_delta, ev_max_dt, ev_out);
            });
        } else if (*pipe) {
            const pmba::SceneConfig cfg = load_config(pipe_config);
            const fs::path out_dir(pipe_out);
            fs::create_directories(out_dir);

            const SimOutputs sim_out_files =
                timer.time("simulate", [&] { return simulate_to_strings(cfg); });
            write_file_atomic(out_dir / "groundtruth.txt", sim_out_files.trajectory);
            write_file_atomic(out_dir / "detections.jsonl", sim_out_files.detections);
            write_file_atomic(out_dir / "problem.txt", sim_out_files.problem);

            std::istringstream din(sim_out_files.detections);
            const auto det_frames = pmba::read_detections(din);

            const SolveResult weighted = solve_problem_text(sim_out_files.problem, &det_frames,
                                                            cfg.fps, false, timer, "weighted_");
            write_file_atomic(out_dir / "est_weighted.txt", weighted.trajectory_text);
            const SolveResult uniform = solve_problem_text(sim_out_files.problem, nullptr, cfg.fps,
                                                           false, timer, "uniform_");
            write_file_atomic(out_dir / "est_uniform.txt", uniform.trajectory_text);

            std::istringstream gt_in(sim_out_files.trajectory);
            const pmba::Trajectory gt = pmba::read_tum_trajectory(gt_in);
            std::istringstream w_in(weighted.trajectory_text);
            const pmba::Trajectory est_w = pmba::read_tum_trajectory(w_in);
            std::istringstream u_in(uniform.trajectory_text);
            const pmba::Trajectory est_u = pmba::read_tum_trajectory(u_in);

            EvalOutputs ew, eu;
            timer.time("eval", [&] {
                ew = eval_to_dir(gt, est_w, false, 1, 0.5 / cfg.fps, out_dir / "eval", "weighted_");
                eu = eval_to_dir(gt, est_u, false, 1, 0.5 / cfg.fps, out_dir / "eval", "uniform_");
            });

            char buf[256];
            std::string comparison = "method,ate_rmse,rpe_translation_rmse,rpe_rotation_rmse\n";
            std::snprintf(buf, sizeof buf, "weighted,%.9g,%.9g,%.9g\n", ew.ate_summary.rmse,
                          ew.rpe_trans_summary.rmse, ew.rpe_rot_summary.rmse);
            comparison += buf;
            std::snprintf(buf, sizeof buf, "uniform,%.9g,%.9g,%.9g\n", eu.ate_summary.rmse,
                          eu.rpe_trans_summary.rmse, eu.rpe_rot_summary.rmse);
            comparison += buf;
            write_file_atomic(out_dir / "comparison.csv", comparison);

            write_manifest(out_dir / "manifest.json",
                           {{"command", "pipeline"},
                            {"config", config_echo(cfg)},
                            {"seed", cfg.seed},
                            {"inputs", {{"config", pipe_config}}},
                            {"reports",
                             {{"weighted", report_to_json(weighted.report)},
                              {"uniform", report_to_json(uniform.report)}}},
                            {"ate_rmse",
                             {{"weighted", ew.ate_summary.rmse}, {"uniform", eu.ate_summary.rmse}}}},
                           timer);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

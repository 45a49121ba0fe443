#pragma once

#include <Eigen/Core>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "pmba/dataset.hpp"
#include "pmba/geometry.hpp"

namespace pmba {

struct ErrorSeries {
    std::vector<std::pair<double, double>> entries;  // (timestamp, error >= 0)
};

struct MetricSummary {
    double rmse = 0.0, mean = 0.0, median = 0.0, std = 0.0, min = 0.0, max = 0.0;
    int n = 0;
};

struct Alignment {
    double scale = 1.0;
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();

    Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return scale * (rotation * p) + translation; }
};

/// Closed-form least-squares similarity (or rigid) transform mapping
/// `estimate` onto `reference`, proper rotation enforced by the sign
/// correction of the smallest singular direction.
inline Alignment align_umeyama(const std::vector<Eigen::Vector3d>& reference,
                               const std::vector<Eigen::Vector3d>& estimate, bool with_scale) {
    const int n = static_cast<int>(reference.size());
    if (n < 3 || estimate.size() != reference.size())
        throw DegenerateConfiguration("need at least 3 point pairs");

    Eigen::Vector3d mu_ref = Eigen::Vector3d::Zero(), mu_est = Eigen::Vector3d::Zero();
    for (int i = 0; i < n; ++i) {
        mu_ref += reference[i];
        mu_est += estimate[i];
    }
    mu_ref /= n;
    mu_est /= n;

    Eigen::Matrix3d sigma = Eigen::Matrix3d::Zero();
    double var_est = 0.0;
    for (int i = 0; i < n; ++i) {
        const Eigen::Vector3d r = reference[i] - mu_ref;
        const Eigen::Vector3d e = estimate[i] - mu_est;
        sigma += r * e.transpose();
        var_est += e.squaredNorm();
    }
    sigma /= n;
    var_est /= n;

    Eigen::JacobiSVD<Eigen::Matrix3d> svd(sigma, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Eigen::Vector3d sv = svd.singularValues();
    if (sv(1) <= 1e-12 * std::max(sv(0), 1e-300))
        throw DegenerateConfiguration("point set is collinear");

    Eigen::Vector3d s_diag = Eigen::Vector3d::Ones();
    if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) s_diag(2) = -1.0;

    Alignment a;
    a.rotation = svd.matrixU() * s_diag.asDiagonal() * svd.matrixV().transpose();
    a.scale = with_scale ? sv.dot(s_diag) / var_est : 1.0;
    a.translation = mu_ref - a.scale * (a.rotation * mu_est);
    return a;
}

/// RMSE, mean, lower-middle median, population std, extremes.
inline MetricSummary summarize(const ErrorSeries& series) {
    if (series.entries.empty()) throw EmptySeries();
    MetricSummary s;
    s.n = static_cast<int>(series.entries.size());
    std::vector<double> vals;
    vals.reserve(series.entries.size());
    double sum = 0.0, sum_sq = 0.0;
    for (const auto& [t, e] : series.entries) {
        vals.push_back(e);
        sum += e;
        sum_sq += e * e;
    }
    std::sort(vals.begin(), vals.end());
    s.min = vals.front();
    s.max = vals.back();
    s.median = vals[(vals.size() - 1) / 2];
    s.mean = sum / s.n;
    s.rmse = std::sqrt(sum_sq / s.n);
    s.std = std::sqrt(std::max(0.0, sum_sq / s.n - s.mean * s.mean));
    return s;
}

/// Absolute trajectory error: associate by timestamp, align estimate to
/// reference, per-pair translational error in meters.
inline std::pair<ErrorSeries, MetricSummary> ate(const Trajectory& reference,
                                                 const Trajectory& estimate, double max_dt = 0.02,
                                                 bool with_scale = false) {
    const auto pairs = associate(reference, estimate, max_dt);
    std::vector<Eigen::Vector3d> ref_pts, est_pts;
    for (const auto& [i, j] : pairs) {
        ref_pts.push_back(reference[i].pose.translation());
        est_pts.push_back(estimate[j].pose.translation());
    }
    const Alignment a = align_umeyama(ref_pts, est_pts, with_scale);
    ErrorSeries series;
    for (size_t p = 0; p < pairs.size(); ++p)
        series.entries.emplace_back(reference[pairs[p].first].timestamp,
                                    (ref_pts[p] - a.apply(est_pts[p])).norm());
    return {series, summarize(series)};
}

struct RpeResult {
    ErrorSeries translation_series;
    MetricSummary translation;
    ErrorSeries rotation_series;
    MetricSummary rotation;
};

/// Relative pose error over a fixed gap of `delta` associated frames:
/// E_i = (Q_i^-1 Q_{i+d})^-1 (P_i^-1 P_{i+d}).
inline RpeResult rpe(const Trajectory& reference, const Trajectory& estimate, int delta = 1,
                     double max_dt = 0.02) {
    if (delta < 1) throw InsufficientPairs("delta must be >= 1");
    const auto pairs = associate(reference, estimate, max_dt);
    if (static_cast<int>(pairs.size()) <= delta)
        throw InsufficientPairs("need more than delta associated pairs");
    RpeResult result;
    for (size_t p = 0; p + delta < pairs.size(); ++p) {
        const Pose& q0 = reference[pairs[p].first].pose;
        const Pose& q1 = reference[pairs[p + delta].first].pose;
        const Pose& p0 = estimate[pairs[p].second].pose;
        const Pose& p1 = estimate[pairs[p + delta].second].pose;
        const Pose e = (q0.inverse() * q1).inverse() * (p0.inverse() * p1);
        const double t = reference[pairs[p].first].timestamp;
        result.translation_series.entries.emplace_back(t, e.translation().norm());
        result.rotation_series.entries.emplace_back(t, e.angle());
    }
    result.translation = summarize(result.translation_series);
    result.rotation = summarize(result.rotation_series);
    return result;
}

// CSV emission: series as `timestamp,error`, summaries as one row.
inline void write_series_csv(const ErrorSeries& series, std::ostream& out) {
    out << "timestamp,error\n";
    char buf[80];
    for (const auto& [t, e] : series.entries) {
        std::snprintf(buf, sizeof buf, "%.9g,%.9g\n", t, e);
        out << buf;
    }
}

inline void write_summary_csv(const std::string& metric, const MetricSummary& s, std::ostream& out,
                              bool header = true) {
    if (header) out << "metric,n,rmse,mean,median,std,min,max\n";
    char buf[200];
    std::snprintf(buf, sizeof buf, "%s,%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", metric.c_str(), s.n,
                  s.rmse, s.mean, s.median, s.std, s.min, s.max);
    out << buf;
}

}  // namespace pmba

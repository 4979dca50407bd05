/**
 * @file metrics.hpp
 * @brief Rollout evaluation metrics and their CSV report.
 *
 * Metrics that can be undefined (zero denominators) return a Metric with
 * `defined == false` instead of throwing.
 */
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "meshderiv/dataset.hpp"

namespace meshderiv {

struct Metric {
    double value = 0.0;
    bool defined = true;

    static Metric undefined();
};

struct RmsePair {
    double rmse = 0.0;
    Metric rrmse;
};

/// Over nodes, with the Euclidean norm across the columns of each row:
/// RMSE = sqrt(mean_i |p_i - y_i|^2), RRMSE = RMSE / sqrt(mean_i |y_i|^2).
RmsePair rmse_rrmse(const Field& pred, const Field& truth);

/// 1 - sum (p - y)^2 / sum (y - mean y)^2.
Metric nse(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth);

/// Normalized MSE, SSE / SST with population variance. Pooled over all entries.
Metric nmse(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth);

/// Coefficient of determination, pooled over all entries.
Metric r_squared(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth);

inline constexpr double kCsiShallow = 0.05;
inline constexpr double kCsiDeep = 0.30;

struct CsiResult {
    Metric csi;
    std::size_t hits = 0;
    std::size_t misses = 0;
    std::size_t false_alarms = 0;
};

/// hits / (hits + misses + false alarms) for exceedance of `threshold`.
CsiResult csi(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth, double threshold);

/// Nearest-node lookup for each pixel of a resolution x resolution raster over
/// the bounding box of `positions`.
struct RasterMap {
    int resolution = 0;
    std::vector<std::uint32_t> node_of_pixel;  // row-major, row 0 at min y
};

RasterMap build_raster_map(const std::vector<Vec2>& positions, int resolution = 128);
Eigen::MatrixXd rasterize(const RasterMap& map, const Eigen::VectorXd& values);

struct SsimOptions {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
};

/// Mean SSIM over the valid (unpadded) window positions of two images, with
/// dynamic range max(truth) - min(truth). Undefined for a constant truth.
Metric ssim_image(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth, const SsimOptions& opt = {});
Metric ssim_raster(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth, const RasterMap& map,
                   const SsimOptions& opt = {});

/// (1 / (t_end - t_0)) * trapezoid integral. One point returns that value
/// with `defined == false`.
Metric auc(const std::vector<double>& series, const std::vector<double>& times);

/// Nodes whose channel value exceeds `threshold` at any frame.
std::vector<bool> important_node_mask(const std::vector<StateField>& frames, int channel, double threshold);

/// Rows of `f` where mask is true.
Field apply_node_mask(const Field& f, const std::vector<bool>& mask);

struct MetricRow {
    std::string case_id;
    std::string channel;
    std::string metric;
    Metric value;
};

struct MetricReport {
    std::vector<MetricRow> rows;

    void add(const std::string& case_id, const std::string& channel, const std::string& metric, Metric v);
    /// Header "case,channel,metric,value"; undefined values are written as "nan".
    void write_csv(std::ostream& os) const;
    /// First matching row or nullptr.
    const MetricRow* find(const std::string& case_id, const std::string& channel, const std::string& metric) const;
};

struct EvalOptions {
    int raster_resolution = 128;
    /// When >= 0, nodes are filtered by important_node_mask on channel 0 of
    /// the truth before every metric.
    double important_threshold = -1.0;
    std::vector<double> csi_thresholds = {kCsiShallow, kCsiDeep};
};

/// Scores predicted frames 1..T against truth frames 1..T (frame 0 is the
/// shared initial condition) and appends rows for each channel plus an "all"
/// channel for the multivariate RMSE/RRMSE.
void evaluate_rollout(MetricReport& report, const std::string& case_id, const std::vector<std::string>& channels,
                      const std::vector<Vec2>& positions, const std::vector<StateField>& pred,
                      const std::vector<StateField>& truth, const EvalOptions& opt = {});

/// Final-step RRMSE and the RRMSE AUC over frames 1..T, all channels pooled.
struct RolloutScore {
    Metric rrmse_final;
    Metric rrmse_auc;
};
RolloutScore score_rollout(const std::vector<StateField>& pred, const std::vector<StateField>& truth);

}  // namespace meshderiv

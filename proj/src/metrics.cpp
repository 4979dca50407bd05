#include "meshderiv/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include "meshderiv/errors.hpp"

namespace meshderiv {

Metric Metric::undefined() {
    return {std::numeric_limits<double>::quiet_NaN(), false};
}

namespace {

void check_same(Eigen::Index a, Eigen::Index b, const char* what) {
    if (a != b) throw InvalidArgument(std::string(what) + ": prediction and truth sizes differ");
}

// sum of squared errors and total sum of squares about the truth mean
std::pair<double, double> sse_sst(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth) {
    const double mean = truth.mean();
    return {(pred - truth).squaredNorm(), (truth.array() - mean).square().sum()};
}

Eigen::VectorXd column(const Field& f, Eigen::Index c) {
    return f.col(c);
}

}  // namespace

RmsePair rmse_rrmse(const Field& pred, const Field& truth) {
    check_same(pred.rows(), truth.rows(), "rmse");
    check_same(pred.cols(), truth.cols(), "rmse");
    if (truth.rows() == 0) throw InvalidArgument("rmse of an empty field");
    const double n = static_cast<double>(truth.rows());
    RmsePair r;
    r.rmse = std::sqrt((pred - truth).squaredNorm() / n);
    const double rms = std::sqrt(truth.squaredNorm() / n);
    r.rrmse = rms > 0.0 ? Metric{r.rmse / rms, true} : Metric::undefined();
    return r;
}

Metric nse(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth) {
    check_same(pred.size(), truth.size(), "nse");
    if (truth.size() < 2) return Metric::undefined();
    const auto [sse, sst] = sse_sst(pred, truth);
    if (!(sst > 0.0)) return Metric::undefined();
    return {1.0 - sse / sst, true};
}

Metric nmse(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth) {
    check_same(pred.size(), truth.size(), "nmse");
    if (truth.size() < 1) return Metric::undefined();
    const auto [sse, sst] = sse_sst(pred, truth);
    if (!(sst > 0.0)) return Metric::undefined();
    return {sse / sst, true};
}

Metric r_squared(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth) {
    const Metric m = nmse(pred, truth);
    return m.defined ? Metric{1.0 - m.value, true} : m;
}

CsiResult csi(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth, double threshold) {
    check_same(pred.size(), truth.size(), "csi");
    if (!(threshold > 0.0)) throw InvalidArgument("csi threshold must be positive");
    CsiResult r;
    for (Eigen::Index i = 0; i < truth.size(); ++i) {
        const bool t = truth[i] > threshold, p = pred[i] > threshold;
        if (t && p) ++r.hits;
        else if (t) ++r.misses;
        else if (p) ++r.false_alarms;
    }
    const std::size_t d = r.hits + r.misses + r.false_alarms;
    r.csi = d > 0 ? Metric{static_cast<double>(r.hits) / static_cast<double>(d), true} : Metric::undefined();
    return r;
}

RasterMap build_raster_map(const std::vector<Vec2>& positions, int resolution) {
    if (resolution < 16) throw InvalidArgument("raster resolution must be at least 16");
    if (positions.empty()) throw InvalidArgument("cannot rasterize an empty mesh");
    double x0 = positions[0].x, x1 = x0, y0 = positions[0].y, y1 = y0;
    for (const Vec2& p : positions) {
        x0 = std::min(x0, p.x);
        x1 = std::max(x1, p.x);
        y0 = std::min(y0, p.y);
        y1 = std::max(y1, p.y);
    }
    RasterMap m;
    m.resolution = resolution;
    m.node_of_pixel.resize(static_cast<std::size_t>(resolution) * static_cast<std::size_t>(resolution));
    const double hx = (x1 - x0) / resolution, hy = (y1 - y0) / resolution;
    for (int r = 0; r < resolution; ++r) {
        for (int c = 0; c < resolution; ++c) {
            const double px = x0 + (c + 0.5) * hx, py = y0 + (r + 0.5) * hy;
            std::uint32_t best = 0;
            double bd = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < positions.size(); ++i) {
                const double dx = positions[i].x - px, dy = positions[i].y - py;
                const double d = dx * dx + dy * dy;
                if (d < bd) {
                    bd = d;
                    best = static_cast<std::uint32_t>(i);
                }
            }
            m.node_of_pixel[static_cast<std::size_t>(r) * static_cast<std::size_t>(resolution) +
                            static_cast<std::size_t>(c)] = best;
        }
    }
    return m;
}

Eigen::MatrixXd rasterize(const RasterMap& map, const Eigen::VectorXd& values) {
    Eigen::MatrixXd img(map.resolution, map.resolution);
    for (int r = 0; r < map.resolution; ++r) {
        for (int c = 0; c < map.resolution; ++c) {
            const auto node = map.node_of_pixel[static_cast<std::size_t>(r) * static_cast<std::size_t>(map.resolution) +
                                                static_cast<std::size_t>(c)];
            if (node >= values.size()) throw InvalidArgument("raster map does not match the field size");
            img(r, c) = values[node];
        }
    }
    return img;
}

Metric ssim_image(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth, const SsimOptions& opt) {
    check_same(pred.rows(), truth.rows(), "ssim");
    check_same(pred.cols(), truth.cols(), "ssim");
    const int w = opt.window;
    if (truth.rows() < w || truth.cols() < w) throw InvalidArgument("image smaller than the SSIM window");
    const double L = truth.maxCoeff() - truth.minCoeff();
    if (!(L > 0.0)) return Metric::undefined();
    const double C1 = (opt.k1 * L) * (opt.k1 * L), C2 = (opt.k2 * L) * (opt.k2 * L);

    Eigen::MatrixXd g(w, w);
    const double c = (w - 1) / 2.0;
    for (int i = 0; i < w; ++i) {
        for (int j = 0; j < w; ++j) g(i, j) = std::exp(-((i - c) * (i - c) + (j - c) * (j - c)) / (2.0 * opt.sigma * opt.sigma));
    }
    g /= g.sum();

    double total = 0.0;
    long count = 0;
    for (Eigen::Index r = 0; r + w <= truth.rows(); ++r) {
        for (Eigen::Index q = 0; q + w <= truth.cols(); ++q) {
            const auto x = pred.block(r, q, w, w).array();
            const auto y = truth.block(r, q, w, w).array();
            const double mx = (g.array() * x).sum(), my = (g.array() * y).sum();
            const double sxx = (g.array() * x * x).sum() - mx * mx;
            const double syy = (g.array() * y * y).sum() - my * my;
            const double sxy = (g.array() * x * y).sum() - mx * my;
            total += ((2 * mx * my + C1) * (2 * sxy + C2)) / ((mx * mx + my * my + C1) * (sxx + syy + C2));
            ++count;
        }
    }
    return {total / static_cast<double>(count), true};
}

Metric ssim_raster(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth, const RasterMap& map,
                   const SsimOptions& opt) {
    return ssim_image(rasterize(map, pred), rasterize(map, truth), opt);
}

Metric auc(const std::vector<double>& series, const std::vector<double>& times) {
    if (series.size() != times.size() || series.empty()) throw InvalidArgument("auc needs matching, non-empty inputs");
    if (series.size() == 1) return {series[0], false};
    const double span = times.back() - times.front();
    if (!(span > 0.0)) throw InvalidArgument("auc timestamps must increase");
    double s = 0.0;
    for (std::size_t i = 1; i < series.size(); ++i) s += 0.5 * (series[i] + series[i - 1]) * (times[i] - times[i - 1]);
    return {s / span, true};
}

std::vector<bool> important_node_mask(const std::vector<StateField>& frames, int channel, double threshold) {
    if (frames.empty()) return {};
    std::vector<bool> mask(static_cast<std::size_t>(frames[0].values.rows()), false);
    for (const auto& f : frames) {
        if (channel < 0 || channel >= f.values.cols()) throw InvalidArgument("mask channel out of range");
        for (Eigen::Index i = 0; i < f.values.rows(); ++i) {
            if (f.values(i, channel) > threshold) mask[static_cast<std::size_t>(i)] = true;
        }
    }
    return mask;
}

Field apply_node_mask(const Field& f, const std::vector<bool>& mask) {
    if (mask.size() != static_cast<std::size_t>(f.rows())) throw InvalidArgument("mask size does not match the field");
    const auto n = static_cast<Eigen::Index>(std::count(mask.begin(), mask.end(), true));
    Field out(n, f.cols());
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < f.rows(); ++i) {
        if (mask[static_cast<std::size_t>(i)]) out.row(k++) = f.row(i);
    }
    return out;
}

void MetricReport::add(const std::string& case_id, const std::string& channel, const std::string& metric, Metric v) {
    rows.push_back({case_id, channel, metric, v});
}

void MetricReport::write_csv(std::ostream& os) const {
    os << "case,channel,metric,value\n";
    char buf[64];
    for (const auto& r : rows) {
        if (r.value.defined && std::isfinite(r.value.value)) {
            std::snprintf(buf, sizeof(buf), "%.17g", r.value.value);
        } else {
            std::snprintf(buf, sizeof(buf), "nan");
        }
        os << r.case_id << ',' << r.channel << ',' << r.metric << ',' << buf << '\n';
    }
}

const MetricRow* MetricReport::find(const std::string& case_id, const std::string& channel,
                                    const std::string& metric) const {
    for (const auto& r : rows) {
        if (r.case_id == case_id && r.channel == channel && r.metric == metric) return &r;
    }
    return nullptr;
}

RolloutScore score_rollout(const std::vector<StateField>& pred, const std::vector<StateField>& truth) {
    const std::size_t T = std::min(pred.size(), truth.size());
    if (T < 2) return {Metric::undefined(), Metric::undefined()};
    std::vector<double> series, times;
    bool defined = true;
    for (std::size_t t = 1; t < T; ++t) {
        const Metric m = rmse_rrmse(pred[t].values, truth[t].values).rrmse;
        defined = defined && m.defined;
        series.push_back(m.value);
        times.push_back(truth[t].time);
    }
    RolloutScore s;
    s.rrmse_final = {series.back(), defined};
    // a rollout that stopped early is scored over the frames it produced
    s.rrmse_auc = series.size() > 1 ? auc(series, times) : Metric{series[0], defined};
    if (!defined) s.rrmse_auc.defined = false;
    return s;
}

void evaluate_rollout(MetricReport& report, const std::string& case_id, const std::vector<std::string>& channels,
                      const std::vector<Vec2>& positions, const std::vector<StateField>& pred,
                      const std::vector<StateField>& truth, const EvalOptions& opt) {
    const std::size_t T = std::min(pred.size(), truth.size());
    if (T < 2) throw InvalidArgument("evaluation needs at least one predicted frame");
    const auto nc = static_cast<Eigen::Index>(channels.size());
    for (std::size_t t = 0; t < T; ++t) {
        if (pred[t].values.cols() != nc || truth[t].values.cols() != nc ||
            pred[t].values.rows() != truth[t].values.rows()) {
            throw InvalidArgument("prediction and truth frames differ in shape for case " + case_id);
        }
    }
    const bool masked = opt.important_threshold >= 0.0;
    std::vector<bool> mask;
    std::vector<Vec2> pos = positions;
    if (masked) {
        mask = important_node_mask({truth.begin(), truth.begin() + static_cast<std::ptrdiff_t>(T)}, 0,
                                   opt.important_threshold);
        pos.clear();
        for (std::size_t i = 0; i < mask.size(); ++i) {
            if (mask[i]) pos.push_back(positions[i]);
        }
    }
    auto sel = [&](const Field& f) { return masked ? apply_node_mask(f, mask) : f; };
    const std::size_t n_nodes = pos.size();
    report.add(case_id, "all", "steps", {static_cast<double>(T - 1), true});
    report.add(case_id, "all", "nodes", {static_cast<double>(n_nodes), true});
    if (n_nodes == 0) return;

    std::vector<Field> P, Y;
    std::vector<double> times;
    for (std::size_t t = 1; t < T; ++t) {
        P.push_back(sel(pred[t].values));
        Y.push_back(sel(truth[t].values));
        times.push_back(truth[t].time);
    }
    const std::size_t S = P.size();

    auto add_series = [&](const std::string& ch, auto&& slice) {
        std::vector<double> rmse, rrmse;
        bool rr_def = true;
        for (std::size_t t = 0; t < S; ++t) {
            const RmsePair r = rmse_rrmse(slice(P[t]), slice(Y[t]));
            rmse.push_back(r.rmse);
            rrmse.push_back(r.rrmse.value);
            rr_def = rr_def && r.rrmse.defined;
        }
        report.add(case_id, ch, "RMSE_final", {rmse.back(), true});
        report.add(case_id, ch, "RMSE_AUC", auc(rmse, times));
        if (rr_def) {
            report.add(case_id, ch, "RRMSE_final", {rrmse.back(), true});
            report.add(case_id, ch, "RRMSE_AUC", auc(rrmse, times));
        } else {
            report.add(case_id, ch, "RRMSE_final", Metric::undefined());
            report.add(case_id, ch, "RRMSE_AUC", Metric::undefined());
        }
    };
    add_series("all", [](const Field& f) -> Field { return f; });

    const RasterMap map = build_raster_map(pos, opt.raster_resolution);
    for (Eigen::Index c = 0; c < nc; ++c) {
        const std::string& ch = channels[static_cast<std::size_t>(c)];
        add_series(ch, [c](const Field& f) -> Field { return f.col(c); });

        Eigen::VectorXd pp(static_cast<Eigen::Index>(S * n_nodes)), yy(pp.size());
        for (std::size_t t = 0; t < S; ++t) {
            pp.segment(static_cast<Eigen::Index>(t * n_nodes), static_cast<Eigen::Index>(n_nodes)) = column(P[t], c);
            yy.segment(static_cast<Eigen::Index>(t * n_nodes), static_cast<Eigen::Index>(n_nodes)) = column(Y[t], c);
        }
        report.add(case_id, ch, "NMSE", nmse(pp, yy));
        report.add(case_id, ch, "R2", r_squared(pp, yy));
        report.add(case_id, ch, "NSE", nse(pp, yy));
        for (double thr : opt.csi_thresholds) {
            char name[32];
            std::snprintf(name, sizeof(name), "CSI_%.2f", thr);
            report.add(case_id, ch, name, csi(pp, yy, thr).csi);
        }

        std::vector<double> ss;
        bool ss_def = true;
        for (std::size_t t = 0; t < S; ++t) {
            const Metric m = ssim_raster(column(P[t], c), column(Y[t], c), map);
            ss.push_back(m.value);
            ss_def = ss_def && m.defined;
        }
        report.add(case_id, ch, "SSIM_final", ss_def ? Metric{ss.back(), true} : Metric::undefined());
        report.add(case_id, ch, "SSIM_AUC", ss_def ? auc(ss, times) : Metric::undefined());
    }
}

}  // namespace meshderiv

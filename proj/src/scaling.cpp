#include "steerlab/scaling.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "steerlab/errors.hpp"

namespace steerlab {

double ScalingFitParams::evaluate(double x) const { return a + b * std::exp(-c * x); }

std::vector<double> decay_grid() {
    std::vector<double> grid(kGridSize);
    const double lo = std::log(kGridMinDecay);
    const double hi = std::log(kGridMaxDecay);
    for (std::size_t k = 0; k < kGridSize; ++k) {
        grid[k] = std::exp(lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(kGridSize - 1));
    }
    grid.front() = kGridMinDecay;
    grid.back() = kGridMaxDecay;
    return grid;
}

namespace {

struct LinearSolution {
    double a;
    double b;
    double sse;
};

double sse_of(std::span<const FitPoint> pts, double a, double b, double c) {
    double s = 0.0;
    for (const auto& p : pts) {
        const double r = a + b * std::exp(-c * p.x) - p.y;
        s += r * r;
    }
    return s;
}

// Least squares for (a, b) with c fixed, via centered normal equations.
LinearSolution solve_linear(std::span<const FitPoint> pts, double c) {
    const double n = static_cast<double>(pts.size());
    double f_mean = 0.0, y_mean = 0.0;
    for (const auto& p : pts) {
        f_mean += std::exp(-c * p.x);
        y_mean += p.y;
    }
    f_mean /= n;
    y_mean /= n;
    double sff = 0.0, sfy = 0.0;
    for (const auto& p : pts) {
        const double df = std::exp(-c * p.x) - f_mean;
        sff += df * df;
        sfy += df * (p.y - y_mean);
    }
    const double b = sff > 0.0 ? sfy / sff : 0.0;
    const double a = y_mean - b * f_mean;
    return {a, b, sse_of(pts, a, b, c)};
}

// 3x3 solve with partial pivoting; returns false when singular.
bool solve3(std::array<std::array<double, 3>, 3> m, std::array<double, 3> rhs,
            std::array<double, 3>& out) {
    for (int col = 0; col < 3; ++col) {
        int piv = col;
        for (int r = col + 1; r < 3; ++r)
            if (std::fabs(m[r][col]) > std::fabs(m[piv][col])) piv = r;
        if (m[piv][col] == 0.0 || !std::isfinite(m[piv][col])) return false;
        std::swap(m[piv], m[col]);
        std::swap(rhs[piv], rhs[col]);
        for (int r = col + 1; r < 3; ++r) {
            const double f = m[r][col] / m[col][col];
            for (int k = col; k < 3; ++k) m[r][k] -= f * m[col][k];
            rhs[r] -= f * rhs[col];
        }
    }
    for (int r = 2; r >= 0; --r) {
        double s = rhs[r];
        for (int k = r + 1; k < 3; ++k) s -= m[r][k] * out[k];
        out[r] = s / m[r][r];
    }
    return std::isfinite(out[0]) && std::isfinite(out[1]) && std::isfinite(out[2]);
}

// Levenberg-style damping: a rejected step raises lambda and is retried.
void refine(std::span<const FitPoint> pts, ScalingFitParams& fit) {
    std::array<double, 3> p{fit.a, fit.b, fit.c};
    double sse = sse_of(pts, p[0], p[1], p[2]);
    double lambda = 1e-3;
    for (std::size_t it = 0; it < kMaxRefineIterations; ++it) {
        fit.iterations = it + 1;
        if (sse == 0.0) {
            fit.converged = true;
            break;
        }
        std::array<std::array<double, 3>, 3> jtj{};
        std::array<double, 3> jtr{};
        for (const auto& pt : pts) {
            const double e = std::exp(-p[2] * pt.x);
            const std::array<double, 3> j{1.0, e, -p[1] * pt.x * e};
            const double r = p[0] + p[1] * e - pt.y;
            for (int i = 0; i < 3; ++i) {
                jtr[i] += j[i] * r;
                for (int k = 0; k < 3; ++k) jtj[i][k] += j[i] * j[k];
            }
        }
        auto damped = jtj;
        for (int i = 0; i < 3; ++i) damped[i][i] += lambda * std::max(jtj[i][i], 1e-300);
        std::array<double, 3> step{};
        const std::array<double, 3> neg{-jtr[0], -jtr[1], -jtr[2]};
        if (!solve3(damped, neg, step)) {
            lambda *= 10.0;
            if (lambda > 1e16) break;
            continue;
        }
        std::array<double, 3> trial{p[0] + step[0], p[1] + step[1], std::max(0.0, p[2] + step[2])};
        const double trial_sse = sse_of(pts, trial[0], trial[1], trial[2]);
        const double step_norm = std::max({std::fabs(trial[0] - p[0]), std::fabs(trial[1] - p[1]),
                                           std::fabs(trial[2] - p[2])});
        if (trial_sse <= sse) {
            p = trial;
            sse = trial_sse;
            lambda = std::max(lambda / 10.0, 1e-12);
            if (step_norm < kStepTolerance) {
                fit.converged = true;
                break;
            }
        } else {
            lambda *= 10.0;
            if (lambda > 1e16) {
                // No descent direction left at working precision.
                fit.converged = true;
                break;
            }
        }
    }
    fit.a = p[0];
    fit.b = p[1];
    fit.c = p[2];
    fit.residual_sse = sse;
}

}  // namespace

ScalingFitParams fit_exponential(std::span<const FitPoint> points, std::string x_unit) {
    if (points.size() < 3) {
        throw UsageError("exponential fit needs at least 3 points, got " + std::to_string(points.size()));
    }
    std::vector<FitPoint> pts(points.begin(), points.end());
    for (const auto& p : pts) {
        if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw UsageError("fit points must be finite");
    }
    std::sort(pts.begin(), pts.end(),
              [](const FitPoint& l, const FitPoint& r) { return l.x < r.x || (l.x == r.x && l.y < r.y); });
    std::size_t distinct = 1;
    for (std::size_t i = 1; i < pts.size(); ++i)
        if (pts[i].x != pts[i - 1].x) ++distinct;
    if (distinct < 3) {
        throw UsageError("exponential fit needs at least 3 distinct x values, got " + std::to_string(distinct));
    }

    const auto grid = decay_grid();
    ScalingFitParams fit;
    fit.x_unit = std::move(x_unit);

    const bool flat = std::all_of(pts.begin(), pts.end(), [&](const FitPoint& p) { return p.y == pts[0].y; });
    if (flat) {
        fit.a = pts[0].y;
        fit.b = 0.0;
        fit.c = grid.front();
        fit.residual_sse = 0.0;
        fit.degenerate = true;
        fit.converged = true;
        return fit;
    }

    double best_sse = std::numeric_limits<double>::infinity();
    for (double c : grid) {
        const LinearSolution s = solve_linear(pts, c);
        if (s.sse < best_sse) {
            best_sse = s.sse;
            fit.a = s.a;
            fit.b = s.b;
            fit.c = c;
        }
    }
    fit.residual_sse = best_sse;
    refine(pts, fit);
    return fit;
}

std::string fit_report_json(const ScalingFitParams& fit, std::span<const FitPoint> points) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : points) pts.push_back({p.x, p.y});
    nlohmann::json doc = {{"a", fit.a},           {"b", fit.b},
                          {"c", fit.c},           {"sse", fit.residual_sse},
                          {"x_unit", fit.x_unit}, {"degenerate", fit.degenerate},
                          {"points", pts}};
    return doc.dump(2) + "\n";
}

double expected_peak_layer(std::size_t n_layers) {
    if (n_layers < 1) throw UsageError("n_layers must be >= 1");
    return 0.4 * static_cast<double>(n_layers);
}

SweepSummary summarize_sweep(std::span<const SweepRecord> records, std::size_t n_layers) {
    const SweepRecord* pos = nullptr;
    const SweepRecord* neg = nullptr;
    // Comparisons are total over (delta, layer, multiplier) so record order never matters.
    auto better_pos = [](const SweepRecord& r, const SweepRecord* cur) {
        if (!cur) return true;
        if (r.delta_prob_vs_baseline != cur->delta_prob_vs_baseline)
            return r.delta_prob_vs_baseline > cur->delta_prob_vs_baseline;
        if (r.layer != cur->layer) return r.layer < cur->layer;
        return r.multiplier < cur->multiplier;
    };
    auto better_neg = [](const SweepRecord& r, const SweepRecord* cur) {
        if (!cur) return true;
        if (r.delta_prob_vs_baseline != cur->delta_prob_vs_baseline)
            return r.delta_prob_vs_baseline < cur->delta_prob_vs_baseline;
        if (r.layer != cur->layer) return r.layer < cur->layer;
        return r.multiplier < cur->multiplier;
    };
    for (const auto& r : records) {
        if (r.multiplier > 0.0 && better_pos(r, pos)) pos = &r;
        if (r.multiplier < 0.0 && better_neg(r, neg)) neg = &r;
    }
    if (!pos || !neg) {
        throw UsageError("sweep summary needs records with both positive and negative multipliers");
    }
    SweepSummary s;
    s.peak_pos_layer = pos->layer;
    s.peak_pos_delta = pos->delta_prob_vs_baseline;
    s.peak_neg_layer = neg->layer;
    s.peak_neg_delta = neg->delta_prob_vs_baseline;
    s.peak_layer_gap = s.peak_pos_layer > s.peak_neg_layer ? s.peak_pos_layer - s.peak_neg_layer
                                                           : s.peak_neg_layer - s.peak_pos_layer;
    s.expected_peak_layer = expected_peak_layer(n_layers);
    return s;
}

double peak_effectiveness(std::span<const SweepRecord> records, SteerSign sign) {
    double best = 0.0;
    bool any = false;
    for (const auto& r : records) {
        const bool match = sign == SteerSign::positive ? r.multiplier > 0.0 : r.multiplier < 0.0;
        if (!match) continue;
        any = true;
        best = std::max(best, std::fabs(r.delta_prob_vs_baseline));
    }
    if (!any) throw UsageError("no records with the requested multiplier sign");
    return best;
}

}  // namespace steerlab

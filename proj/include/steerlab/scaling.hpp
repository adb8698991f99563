#pragma once

// Effectiveness-vs-size analytics: the y = a + b * exp(-c * x) fit, the
// expected peak layer and sweep summaries.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "steerlab/eval.hpp"

namespace steerlab {

struct FitPoint {
    double x = 0.0;
    double y = 0.0;
    friend bool operator==(const FitPoint&, const FitPoint&) = default;
};

struct ScalingFitParams {
    double a = 0.0;  // asymptote
    double b = 0.0;  // amplitude
    double c = 0.0;  // decay rate per unit x
    double residual_sse = 0.0;
    std::string x_unit = "billions of parameters";
    bool degenerate = false;  // flat data: b == 0, c is the first grid value
    bool converged = false;
    std::size_t iterations = 0;

    double evaluate(double x) const;
};

inline constexpr double kGridMinDecay = 1e-4;
inline constexpr double kGridMaxDecay = 10.0;
inline constexpr std::size_t kGridSize = 64;
inline constexpr std::size_t kMaxRefineIterations = 200;
inline constexpr double kStepTolerance = 1e-10;

/// Log-spaced decay-rate grid used to seed the fit.
std::vector<double> decay_grid();

/// Least-squares fit of y = a + b * exp(-c * x), c >= 0. For each grid c the
/// linear subproblem in (a, b) is solved exactly; the best seed is refined by
/// damped Gauss-Newton. Points are sorted by x first, so the result does not
/// depend on input order. Throws UsageError with fewer than 3 distinct x.
ScalingFitParams fit_exponential(std::span<const FitPoint> points,
                                 std::string x_unit = "billions of parameters");

/// Fit report JSON (a, b, c, sse, x_unit, degenerate, points).
std::string fit_report_json(const ScalingFitParams& fit, std::span<const FitPoint> points);

/// 0.4 * n_layers, unrounded.
double expected_peak_layer(std::size_t n_layers);

struct SweepSummary {
    std::size_t peak_pos_layer = 0;
    double peak_pos_delta = 0.0;
    std::size_t peak_neg_layer = 0;
    double peak_neg_delta = 0.0;
    std::size_t peak_layer_gap = 0;
    double expected_peak_layer = 0.0;
};

/// Largest delta among positive multipliers, smallest among negative ones;
/// ties go to the lower layer. Throws UsageError if a sign class is missing.
SweepSummary summarize_sweep(std::span<const SweepRecord> records, std::size_t n_layers);

enum class SteerSign { positive, negative };

/// max |delta_prob_vs_baseline| over records of the given multiplier sign.
double peak_effectiveness(std::span<const SweepRecord> records, SteerSign sign);

}  // namespace steerlab

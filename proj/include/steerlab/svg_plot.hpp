#pragma once

#include <span>
#include <string>

#include "steerlab/scaling.hpp"

namespace steerlab {

/// Self-contained SVG line chart: one <path> for the data series (with
/// circle markers) and one <path> for the fitted curve.
std::string render_fit_svg(std::span<const FitPoint> points, const ScalingFitParams& fit,
                           const std::string& title, const std::string& y_label);

}  // namespace steerlab

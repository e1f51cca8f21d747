#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "bsio/errors.hpp"

namespace bsio {

// Modulus of continuity: increasing on [0, 1] with w(0) = 0 and a finite
// Dini integral of w(t)/t.  Three shapes are supported: the pure power
// t^delta, the linear modulus t, and a piecewise-linear table through
// (0, 0).  Values past t = 1 are clamped to w(1); the library only ever
// evaluates at ratios <= 1/2 plus the clamp keeps the function bounded.
class ModulusOfContinuity {
public:
    enum class Form { power, linear, tabulated };

    static ModulusOfContinuity power(double delta) {
        if (!(delta > 0))
            throw validation_error("ModulusOfContinuity: power exponent must be positive");
        ModulusOfContinuity m;
        m.form_ = Form::power;
        m.delta_ = delta;
        return m;
    }

    static ModulusOfContinuity linear() {
        ModulusOfContinuity m;
        m.form_ = Form::linear;
        return m;
    }

    // Points (t_i, w_i) with 0 < t_1 < ... < t_m <= 1 and 0 <= w_1 <= ... <= w_m;
    // the graph is linear between consecutive points and from (0, 0) to the
    // first, constant past the last.
    static ModulusOfContinuity tabulated(std::vector<std::pair<double, double>> points) {
        if (points.empty())
            throw validation_error("ModulusOfContinuity: table needs at least one point");
        double prev_t = 0.0, prev_w = 0.0;
        for (const auto& [t, w] : points) {
            if (!(t > prev_t) || t > 1.0)
                throw validation_error("ModulusOfContinuity: table abscissae must increase within (0, 1]");
            if (!(w >= prev_w) || !(w >= 0))
                throw validation_error("ModulusOfContinuity: table values must be nonnegative and nondecreasing");
            prev_t = t;
            prev_w = w;
        }
        ModulusOfContinuity m;
        m.form_ = Form::tabulated;
        m.points_ = std::move(points);
        return m;
    }

    Form form() const { return form_; }
    double power_exponent() const { return delta_; }
    const std::vector<std::pair<double, double>>& points() const { return points_; }

    double operator()(double t) const {
        if (!(t >= 0)) throw validation_error("ModulusOfContinuity: negative argument");
        if (t > 1.0) t = 1.0;
        switch (form_) {
        case Form::power: return std::pow(t, delta_);
        case Form::linear: return t;
        case Form::tabulated: {
            if (t == 0.0) return 0.0;
            double t0 = 0.0, w0 = 0.0;
            for (const auto& [t1, w1] : points_) {
                if (t <= t1) return w0 + (w1 - w0) * (t - t0) / (t1 - t0);
                t0 = t1;
                w0 = w1;
            }
            return points_.back().second;
        }
        }
        return 0.0;
    }

    // Integral of w(t)/t over (0, 1], in closed form per segment.
    double dini_integral() const {
        switch (form_) {
        case Form::power: return 1.0 / delta_;
        case Form::linear: return 1.0;
        case Form::tabulated: {
            double total = 0.0;
            double t0 = 0.0, w0 = 0.0;
            for (const auto& [t1, w1] : points_) {
                const double slope = (w1 - w0) / (t1 - t0);
                if (t0 == 0.0) {
                    // Linear through the origin integrates to its endpoint value.
                    total += w1;
                } else {
                    const double intercept = w0 - slope * t0;
                    total += intercept * std::log(t1 / t0) + slope * (t1 - t0);
                }
                t0 = t1;
                w0 = w1;
            }
            if (t0 < 1.0) total += w0 * std::log(1.0 / t0);
            return total;
        }
        }
        return 0.0;
    }

    // Largest w(s + t) / (w(s) + w(t)) over a uniform grid with s + t <= 1;
    // at most 1 (up to rounding) for a genuinely subadditive modulus.  A
    // diagnostic, not a constructor requirement.
    double subadditivity_defect(int grid = 64) const {
        if (grid < 2) throw validation_error("subadditivity_defect: grid too small");
        double worst = 0.0;
        for (int i = 1; i < grid; ++i) {
            for (int j = i; i + j < grid; ++j) {
                const double s = static_cast<double>(i) / grid;
                const double t = static_cast<double>(j) / grid;
                const double denom = (*this)(s) + (*this)(t);
                if (denom > 0) worst = std::max(worst, (*this)(s + t) / denom);
            }
        }
        return worst;
    }

    std::string describe() const {
        switch (form_) {
        case Form::power: return "power(" + std::to_string(delta_) + ")";
        case Form::linear: return "linear";
        case Form::tabulated: return "tabulated(" + std::to_string(points_.size()) + " points)";
        }
        return "?";
    }

private:
    ModulusOfContinuity() = default;

    Form form_ = Form::linear;
    double delta_ = 1.0;
    std::vector<std::pair<double, double>> points_;
};

} // namespace bsio

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"

namespace scooterbench {

inline constexpr double kGravity = 9.81;
inline constexpr double kKmhPerMs = 3.6;

struct VehicleParams {
    double frontal_area = 0.78;   // m^2
    double tyre_pressure = 2.3;   // bar, metadata only
    double inertia_factor = 1.04;
    double mass_scooter = 99.0;   // kg
    double mass_rider = 80.0;     // kg
    double air_density = 1.232;   // kg/m^3
    double drag_coeff = 0.7;
    double rolling_coeff = 0.031;

    double total_mass() const { return mass_scooter + mass_rider; }
    double effective_mass() const { return inertia_factor * total_mass(); }

    void validate() const
    {
        if (!(mass_scooter > 0.0) || !(mass_rider > 0.0))
            throw ConfigError("vehicle masses must be positive");
        if (!(frontal_area > 0.0))
            throw ConfigError("frontal_area must be positive");
        if (!(air_density > 0.0))
            throw ConfigError("air_density must be positive");
        if (!(inertia_factor >= 1.0))
            throw ConfigError("inertia_factor must be >= 1");
    }

    bool operator==(const VehicleParams&) const = default;
};

/// Road load F(v) = quad_coeff * v^2 + const_coeff, v in km/h.
struct ResistanceCurve {
    double quad_coeff = 0.015;  // N/(km/h)^2
    double const_coeff = 41.65; // N

    void validate() const
    {
        if (!(quad_coeff >= 0.0) || !(const_coeff >= 0.0))
            throw ConfigError("resistance coefficients must be non-negative");
    }

    bool operator==(const ResistanceCurve&) const = default;
};

struct PathSample {
    double time;     // s
    double velocity; // km/h
    double distance; // m

    bool operator==(const PathSample&) const = default;
};

struct PathTimeSeries {
    std::vector<PathSample> samples;

    std::size_t size() const { return samples.size(); }
    bool empty() const { return samples.empty(); }
    const PathSample& front() const { return samples.front(); }
    const PathSample& back() const { return samples.back(); }

    bool operator==(const PathTimeSeries&) const = default;
};

inline double resistance_force(const ResistanceCurve& curve, double v_kmh)
{
    if (v_kmh < 0.0)
        throw DomainError("resistance_force: negative velocity");
    return curve.quad_coeff * v_kmh * v_kmh + curve.const_coeff;
}

/// Positive values resist motion (uphill).
inline double grade_force(const VehicleParams& params, double grade)
{
    return params.total_mass() * kGravity * std::sin(std::atan(grade));
}

/**
 * Unpowered run-out on a constant grade, classic RK4 with fixed step.
 * Stops once the velocity is at or below 1 km/h or simulated time passes 600 s.
 */
inline PathTimeSeries simulate_coast_down(const VehicleParams& params, const ResistanceCurve& curve,
                                          double v0_kmh, double grade, double dt = 0.01)
{
    if (!(dt > 0.0) || dt > 0.1)
        throw ConfigError("simulate_coast_down: dt must be in (0, 0.1] s");
    if (!(v0_kmh > 0.0))
        throw DomainError("simulate_coast_down: v0 must be positive");

    constexpr double t_max = 600.0;
    constexpr double v_stop = 1.0;
    const double m_eff = params.effective_mass();
    const double f_grade = grade_force(params, grade);

    // state: velocity in m/s; distance follows from the velocity stages
    auto accel = [&](double v_ms) {
        double v_kmh = std::max(0.0, v_ms * kKmhPerMs);
        return -(resistance_force(curve, v_kmh) + f_grade) / m_eff;
    };

    PathTimeSeries out;
    double v = v0_kmh / kKmhPerMs;
    double s = 0.0;
    out.samples.push_back({0.0, v0_kmh, 0.0});

    const auto max_steps = static_cast<long>(std::floor(t_max / dt + 1e-9));
    for (long k = 1; k <= max_steps; ++k) {
        double k1 = accel(v);
        double k2 = accel(v + 0.5 * dt * k1);
        double k3 = accel(v + 0.5 * dt * k2);
        double k4 = accel(v + dt * k3);
        double v_next = v + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        // distance uses the same stage velocities
        double s_next = s + dt / 6.0 * (v + 2.0 * (v + 0.5 * dt * k1) + 2.0 * (v + 0.5 * dt * k2) + (v + dt * k3));
        v = std::max(0.0, v_next);
        s = std::max(s, s_next);
        double t = static_cast<double>(k) * dt;
        out.samples.push_back({t, v * kKmhPerMs, s});
        if (v * kKmhPerMs <= v_stop)
            break;
    }
    return out;
}

namespace detail {

inline double interpolate_velocity(const std::vector<PathSample>& s, double t)
{
    auto it = std::lower_bound(s.begin(), s.end(), t,
                               [](const PathSample& a, double tt) { return a.time < tt; });
    if (it == s.end())
        return s.back().velocity;
    if (it->time == t || it == s.begin())
        return it->velocity;
    auto prev = it - 1;
    double w = (t - prev->time) / (it->time - prev->time);
    return prev->velocity + w * (it->velocity - prev->velocity);
}

inline double interpolate_distance(const std::vector<PathSample>& s, double t)
{
    auto it = std::lower_bound(s.begin(), s.end(), t,
                               [](const PathSample& a, double tt) { return a.time < tt; });
    if (it == s.end())
        return s.back().distance;
    if (it->time == t || it == s.begin())
        return it->distance;
    auto prev = it - 1;
    double w = (t - prev->time) / (it->time - prev->time);
    return prev->distance + w * (it->distance - prev->distance);
}

} // namespace detail

/// Mean of two runs driven in opposite directions, on run_a's time grid up to the shorter run's end.
inline PathTimeSeries average_opposite_runs(const PathTimeSeries& run_a, const PathTimeSeries& run_b)
{
    if (run_a.empty() || run_b.empty())
        throw ValidationError("average_opposite_runs: empty run");
    if (std::abs(run_a.front().velocity - run_b.front().velocity) > 1.0)
        throw ValidationError("average_opposite_runs: start velocities differ by more than 1 km/h");

    const double t_end = std::min(run_a.back().time, run_b.back().time);
    PathTimeSeries out;
    for (const auto& a : run_a.samples) {
        if (a.time > t_end)
            break;
        double vb = detail::interpolate_velocity(run_b.samples, a.time);
        double sb = detail::interpolate_distance(run_b.samples, a.time);
        out.samples.push_back({a.time, 0.5 * (a.velocity + vb), 0.5 * (a.distance + sb)});
    }
    return out;
}

struct FitReport {
    ResistanceCurve curve;
    bool quad_clamped = false;
    bool const_clamped = false;
    std::size_t points_used = 0;
    double rms_residual = 0.0; // N
};

/// Least squares on F = -m_eff * dv/dt against (v^2, 1), with central-difference accelerations.
inline FitReport fit_resistance_curve_report(const PathTimeSeries& series, const VehicleParams& params)
{
    const auto& s = series.samples;
    if (s.size() < 20)
        throw FitError("fit_resistance_curve: need at least 20 samples, got " + std::to_string(s.size()));
    auto [lo, hi] = std::minmax_element(s.begin(), s.end(), [](const PathSample& a, const PathSample& b) {
        return a.velocity < b.velocity;
    });
    double span = hi->velocity - lo->velocity;
    if (span < 15.0)
        throw FitError("fit_resistance_curve: velocity span " + std::to_string(span) + " km/h is below 15 km/h");

    const double m_eff = params.effective_mass();
    double sxx = 0, sx = 0, n = 0, sxy = 0, sy = 0;
    std::vector<std::pair<double, double>> pts;
    pts.reserve(s.size());
    for (std::size_t i = 1; i + 1 < s.size(); ++i) {
        double a = (s[i + 1].velocity - s[i - 1].velocity) / kKmhPerMs / (s[i + 1].time - s[i - 1].time);
        double f = -m_eff * a;
        double x = s[i].velocity * s[i].velocity;
        pts.emplace_back(x, f);
        sxx += x * x;
        sx += x;
        n += 1.0;
        sxy += x * f;
        sy += f;
    }
    double det = n * sxx - sx * sx;
    if (!(std::abs(det) > 0.0))
        throw FitError("fit_resistance_curve: singular normal equations");

    // centred form of the 2x2 solve keeps precision when v^2 is large
    double mx = sx / n, my = sy / n;
    double cxx = 0, cxy = 0;
    for (const auto& [x, f] : pts) {
        cxx += (x - mx) * (x - mx);
        cxy += (x - mx) * (f - my);
    }
    double q = cxy / cxx;
    double c = my - q * mx;

    FitReport rep;
    rep.points_used = pts.size();
    double ss = 0;
    for (const auto& [x, f] : pts) {
        double r = f - (q * x + c);
        ss += r * r;
    }
    rep.rms_residual = std::sqrt(ss / n);
    if (q < 0.0) {
        q = 0.0;
        rep.quad_clamped = true;
    }
    if (c < 0.0) {
        c = 0.0;
        rep.const_clamped = true;
    }
    rep.curve = {q, c};
    return rep;
}

inline ResistanceCurve fit_resistance_curve(const PathTimeSeries& series, const VehicleParams& params)
{
    return fit_resistance_curve_report(series, params).curve;
}

/**
 * Integral form of the same regression: m_eff * (v(t) - v(0)) = -(a * int v^2 dt + c * t).
 * Regresses the measured velocity on (1, int v^2 dt, t) so no differentiation of
 * noisy samples is needed; the intercept absorbs the noise of the first sample.
 */
inline FitReport fit_resistance_curve_integral(const PathTimeSeries& series, const VehicleParams& params)
{
    const auto& s = series.samples;
    if (s.size() < 20)
        throw FitError("fit_resistance_curve_integral: need at least 20 samples, got " + std::to_string(s.size()));
    auto [lo, hi] = std::minmax_element(s.begin(), s.end(), [](const PathSample& a, const PathSample& b) {
        return a.velocity < b.velocity;
    });
    if (hi->velocity - lo->velocity < 15.0)
        throw FitError("fit_resistance_curve_integral: velocity span below 15 km/h");

    const double m_eff = params.effective_mass();
    const std::size_t n = s.size();
    std::vector<double> x1(n), x2(n), y(n);
    double integral = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (i > 0)
            integral += 0.5 * (s[i].velocity * s[i].velocity + s[i - 1].velocity * s[i - 1].velocity) *
                        (s[i].time - s[i - 1].time);
        x1[i] = integral;
        x2[i] = s[i].time;
        y[i] = -m_eff * s[i].velocity / kKmhPerMs;
    }

    // centred normal equations for y = b0 + a x1 + c x2
    auto mean = [n](const std::vector<double>& v) {
        double acc = 0.0;
        for (double e : v)
            acc += e;
        return acc / static_cast<double>(n);
    };
    double m1 = mean(x1), m2 = mean(x2), my = mean(y);
    double s11 = 0, s12 = 0, s22 = 0, s1y = 0, s2y = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double d1 = x1[i] - m1, d2 = x2[i] - m2, dy = y[i] - my;
        s11 += d1 * d1;
        s12 += d1 * d2;
        s22 += d2 * d2;
        s1y += d1 * dy;
        s2y += d2 * dy;
    }
    double det = s11 * s22 - s12 * s12;
    if (!(std::abs(det) > 1e-12 * s11 * s22))
        throw FitError("fit_resistance_curve_integral: singular normal equations");
    // x1 is in (km/h)^2 s and y in N s, so the slope is already per (km/h)^2
    double a = (s1y * s22 - s2y * s12) / det;
    double c = (s2y * s11 - s1y * s12) / det;
    double b0 = my - a * m1 - c * m2;

    FitReport rep;
    rep.points_used = n;
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double r = y[i] - (b0 + a * x1[i] + c * x2[i]);
        ss += r * r;
    }
    rep.rms_residual = std::sqrt(ss / static_cast<double>(n));
    if (a < 0.0) {
        a = 0.0;
        rep.quad_clamped = true;
    }
    if (c < 0.0) {
        c = 0.0;
        rep.const_clamped = true;
    }
    rep.curve = {a, c};
    return rep;
}

/// Fits each direction separately and averages the coefficients; a constant grade cancels exactly.
inline FitReport fit_opposite_runs(const PathTimeSeries& run_a, const PathTimeSeries& run_b,
                                   const VehicleParams& params)
{
    FitReport a = fit_resistance_curve_integral(run_a, params);
    FitReport b = fit_resistance_curve_integral(run_b, params);
    FitReport r;
    r.curve = {0.5 * (a.curve.quad_coeff + b.curve.quad_coeff), 0.5 * (a.curve.const_coeff + b.curve.const_coeff)};
    r.quad_clamped = a.quad_clamped || b.quad_clamped;
    r.const_clamped = a.const_clamped || b.const_clamped;
    r.points_used = a.points_used + b.points_used;
    r.rms_residual = std::sqrt(0.5 * (a.rms_residual * a.rms_residual + b.rms_residual * b.rms_residual));
    return r;
}

/// Multiplies every velocity by (1 + N(0, rel_sigma)), clamped at zero; time and distance untouched.
template <class Rng>
PathTimeSeries add_velocity_noise(PathTimeSeries series, double rel_sigma, Rng& rng)
{
    if (rel_sigma <= 0.0)
        return series;
    std::normal_distribution<double> n(0.0, rel_sigma);
    for (auto& p : series.samples)
        p.velocity = std::max(0.0, p.velocity * (1.0 + n(rng)));
    return series;
}

struct AeroRolling {
    double drag_coeff;
    double rolling_coeff;
};

inline AeroRolling derive_aero_rolling(const ResistanceCurve& curve, const VehicleParams& params)
{
    double cw = 2.0 * curve.quad_coeff * kKmhPerMs * kKmhPerMs / (params.air_density * params.frontal_area);
    double fr = curve.const_coeff / (params.total_mass() * kGravity);
    return {cw, fr};
}

/// Inverse of derive_aero_rolling.
inline ResistanceCurve curve_from_aero_rolling(const AeroRolling& ar, const VehicleParams& params)
{
    double q = ar.drag_coeff * params.air_density * params.frontal_area / (2.0 * kKmhPerMs * kKmhPerMs);
    double c = ar.rolling_coeff * params.total_mass() * kGravity;
    return {q, c};
}

inline void write_csv(std::ostream& os, const PathTimeSeries& series)
{
    os << "time_s,velocity_kmh,distance_m\n";
    char buf[128];
    for (const auto& p : series.samples) {
        std::snprintf(buf, sizeof buf, "%.10g,%.10g,%.10g\n", p.time, p.velocity, p.distance);
        os << buf;
    }
}

inline PathTimeSeries read_path_csv(std::istream& is)
{
    std::string line;
    if (!std::getline(is, line) || line.rfind("time_s,velocity_kmh,distance_m", 0) != 0)
        throw ValidationError("path CSV: missing header");
    PathTimeSeries out;
    while (std::getline(is, line)) {
        if (line.empty())
            continue;
        std::istringstream ls(line);
        PathSample p{};
        char c1 = 0, c2 = 0;
        if (!(ls >> p.time >> c1 >> p.velocity >> c2 >> p.distance) || c1 != ',' || c2 != ',')
            throw ValidationError("path CSV: malformed row '" + line + "'");
        if (!out.empty() && !(p.time > out.back().time))
            throw ValidationError("path CSV: time not strictly increasing");
        out.samples.push_back(p);
    }
    return out;
}

} // namespace scooterbench

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

#include "errors.hpp"

namespace scooterbench {

/// Throttle-by-wire actuator: first-order lag, accuracy expressed as reporting noise.
struct TbwActuator {
    double position = 0.0;      // %
    double response_time = 0.06; // s, time to reach 95 % of a step
    double accuracy = 0.9963;

    double time_constant() const { return response_time / 3.0; }

    /// Half-width of the uniform position error in percent of full scale.
    double position_error_band() const { return (1.0 - accuracy) * 100.0; }
};

inline double actuator_step(TbwActuator& act, double command, double dt)
{
    if (command < 0.0 || command > 100.0 || std::isnan(command))
        throw RangeError("actuator_step: command outside 0..100 %");
    if (!(dt > 0.0))
        throw DomainError("actuator_step: dt must be positive");
    if (!(act.response_time > 0.0))
        throw ConfigError("actuator response_time must be positive");
    double decay = std::exp(-dt / act.time_constant());
    act.position = command + (act.position - command) * decay;
    act.position = std::clamp(act.position, 0.0, 100.0);
    return act.position;
}

/// Position as a throttle position sensor would report it.
template <class Rng>
double reported_position(const TbwActuator& act, Rng& rng)
{
    double band = act.position_error_band();
    std::uniform_real_distribution<double> u(-band, band);
    return std::clamp(act.position + u(rng), 0.0, 100.0);
}

struct GainStage {
    double min_abs_error; // km/h; stage applies when |e| >= this value
    double kp;
    double ki;
};

struct PiController {
    double kp = 16.0; // %/(km/h)
    double ki = 4.0;  // %/(km/h s)
    double integrator = 0.0;
    double output_min = 0.0;
    double output_max = 100.0;
    double setpoint = 48.7; // km/h
    std::vector<GainStage> gain_schedule{{0.0, 16.0, 1.0}, {0.15, 16.0, 4.0}};

    // telemetry of the last step
    double last_error = 0.0;
    double last_output = 0.0;

    /// Gains in force for a given error magnitude.
    GainStage gains_for(double abs_error) const
    {
        GainStage g{0.0, kp, ki};
        for (const auto& s : gain_schedule)
            if (abs_error >= s.min_abs_error)
                g = s;
        return g;
    }

    double min_ki() const
    {
        double m = ki;
        for (const auto& s : gain_schedule)
            m = std::min(m, s.ki);
        return m;
    }

    double integrator_bound() const
    {
        double k = min_ki();
        return k > 0.0 ? std::min(output_max, output_max / k) : output_max;
    }
};

/// One controller update; returns the clamped throttle command.
inline double pi_step(PiController& ctrl, double v_meas, double dt)
{
    if (!(dt > 0.0))
        throw DomainError("pi_step: dt must be positive");
    double e = ctrl.setpoint - v_meas;
    GainStage g = ctrl.gains_for(std::abs(e));
    double u = g.kp * e + ctrl.integrator;
    bool saturated_up = u >= ctrl.output_max && e > 0.0;
    bool saturated_down = u <= ctrl.output_min && e < 0.0;
    if (!saturated_up && !saturated_down) {
        double bound = ctrl.integrator_bound();
        ctrl.integrator = std::clamp(ctrl.integrator + g.ki * e * dt, std::max(ctrl.output_min, -bound), bound);
    }
    double out = std::clamp(u, ctrl.output_min, ctrl.output_max);
    ctrl.last_error = e;
    ctrl.last_output = out;
    return out;
}

/**
 * True when the trailing window of `window_s` seconds of samples taken at
 * `rate_hz` stays within `band` (max - min).  Fewer samples than a full
 * window is reported as not settled.
 */
inline bool settle_detect(const std::vector<double>& history, double rate_hz = 20.0, double window_s = 5.0,
                          double band = 0.2)
{
    auto n = static_cast<std::size_t>(std::llround(rate_hz * window_s));
    if (n == 0 || history.size() < n)
        return false;
    auto first = history.end() - static_cast<std::ptrdiff_t>(n);
    auto [lo, hi] = std::minmax_element(first, history.end());
    return *hi - *lo <= band;
}

} // namespace scooterbench

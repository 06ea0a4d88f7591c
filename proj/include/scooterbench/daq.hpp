#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <map>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "errors.hpp"
#include "powertrain.hpp"
#include "table.hpp"

namespace scooterbench {

struct ChannelSample {
    double time;
    double value;
};

/// Uniformly sampled signal.
struct Channel {
    std::string name;
    double rate = 1.0; // Hz
    std::vector<ChannelSample> samples;

    /// Appends the next sample; its timestamp follows from the rate.
    void push(double value, double t0 = 0.0)
    {
        samples.push_back({t0 + static_cast<double>(samples.size()) / rate, value});
    }

    double mean() const
    {
        if (samples.empty())
            return 0.0;
        double s = 0.0;
        for (const auto& p : samples)
            s += p.value;
        return s / static_cast<double>(samples.size());
    }

    bool uniform(double tol = 1e-9) const
    {
        for (std::size_t i = 1; i < samples.size(); ++i)
            if (std::abs(samples[i].time - samples[i - 1].time - 1.0 / rate) > tol)
                return false;
        return true;
    }
};

struct CrankTickStream {
    std::vector<double> ticks; // s
    int resolution = 1024;     // ticks per revolution
};

inline double min_sampling_rate(double resolution, double engine_speed)
{
    if (resolution < 0 || engine_speed < 0)
        throw DomainError("min_sampling_rate: negative input");
    return 2.0 * resolution * engine_speed / 60.0;
}

/// Engine speed from the ticks inside the trailing window that ends at the last tick.
inline double engine_speed_from_ticks(const CrankTickStream& stream, double window)
{
    if (stream.ticks.size() < 2 || !(window > 0.0))
        return 0.0;
    double t_end = stream.ticks.back();
    auto first = std::lower_bound(stream.ticks.begin(), stream.ticks.end(), t_end - window);
    auto n = static_cast<std::size_t>(stream.ticks.end() - first);
    if (n < 2)
        return 0.0;
    double elapsed = t_end - *first;
    return 60.0 * static_cast<double>(n - 1) / (elapsed * stream.resolution);
}

/// Ticks of a crank turning at constant speed, each displaced by uniform jitter of +-`jitter` of the period.
template <class Rng>
CrankTickStream make_tick_stream(double engine_speed, double duration, double jitter, Rng& rng, int resolution = 1024)
{
    CrankTickStream s;
    s.resolution = resolution;
    if (!(engine_speed > 0.0))
        return s;
    double period = 60.0 / (engine_speed * resolution);
    auto n = static_cast<std::size_t>(std::floor(duration / period)) + 1;
    s.ticks.reserve(n);
    std::uniform_real_distribution<double> u(-jitter, jitter);
    for (std::size_t k = 0; k < n; ++k) {
        double t = static_cast<double>(k) * period;
        if (jitter > 0.0)
            t += u(rng) * period;
        if (!s.ticks.empty() && t <= s.ticks.back())
            t = s.ticks.back() + 1e-12;
        s.ticks.push_back(t);
    }
    return s;
}

struct LambdaReading {
    double lambda;
    bool clamped;
};

/// Narrowband sensor characteristic: voltage -> lambda, falling (high voltage means rich).
inline Table1D default_lambda_table()
{
    return Table1D{{0.0, 1.10}, {0.1, 1.05}, {0.2, 1.03}, {0.35, 1.01}, {0.45, 1.00},
                   {0.6, 0.99}, {0.8, 0.97}, {1.0, 0.90}};
}

inline LambdaReading lambda_lookup(double voltage, const Table1D& table)
{
    LambdaReading r{0.0, false};
    double lo = table.x().front(), hi = table.x().back();
    if (voltage < lo || voltage > hi) {
        r.clamped = true;
        voltage = std::clamp(voltage, lo, hi);
    }
    r.lambda = table(voltage);
    return r;
}

/// Sensor voltage that the table maps to `lambda`; inverse of lambda_lookup.
inline double lambda_sensor_voltage(double lambda, const Table1D& table)
{
    const auto& x = table.x();
    const auto& y = table.y();
    if (lambda >= y.front())
        return x.front();
    if (lambda <= y.back())
        return x.back();
    for (std::size_t i = 1; i < y.size(); ++i) {
        if (lambda >= y[i]) {
            double w = (y[i - 1] - lambda) / (y[i - 1] - y[i]);
            return x[i - 1] + w * (x[i] - x[i - 1]);
        }
    }
    return x.back();
}

struct EnsembleResult {
    PressureTrace mean;
    PressureTrace stddev;
};

inline EnsembleResult ensemble_average(const std::vector<PressureTrace>& traces, std::size_t n)
{
    if (traces.empty() || n != traces.size())
        throw ValidationError("ensemble_average: count does not match the trace list");
    const auto& grid = traces.front().crank_angle;
    for (const auto& t : traces)
        if (t.crank_angle != grid || t.pressure.size() != grid.size())
            throw ValidationError("ensemble_average: traces use different crank-angle grids");

    EnsembleResult r;
    r.mean.crank_angle = grid;
    r.stddev.crank_angle = grid;
    r.mean.pressure.assign(grid.size(), 0.0);
    r.stddev.pressure.assign(grid.size(), 0.0);
    const double count = static_cast<double>(n);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        double s = 0.0;
        for (const auto& t : traces)
            s += t.pressure[i];
        double m = s / count;
        double ss = 0.0;
        for (const auto& t : traces)
            ss += (t.pressure[i] - m) * (t.pressure[i] - m);
        r.mean.pressure[i] = m;
        r.stddev.pressure[i] = std::sqrt(ss / count);
    }
    return r;
}

inline Channel decimate_to_1hz(const Channel& raw)
{
    if (std::abs(raw.rate - 10.0) > 1e-12)
        throw ValidationError("decimate_to_1hz: input must be sampled at 10 Hz");
    Channel out;
    out.name = raw.name;
    out.rate = 1.0;
    std::size_t blocks = raw.samples.size() / 10;
    for (std::size_t b = 0; b < blocks; ++b) {
        double s = 0.0;
        for (std::size_t k = 0; k < 10; ++k)
            s += raw.samples[b * 10 + k].value;
        double t_end = raw.samples[b * 10 + 9].time + 1.0 / raw.rate;
        out.samples.push_back({t_end, s / 10.0});
    }
    return out;
}

struct LogBundle {
    std::vector<Channel> can;       // 20 Hz
    std::vector<Channel> emissions; // 1 Hz
    EnsembleResult pressure;
    std::map<std::string, std::string> meta;

    const Channel& can_channel(const std::string& name) const
    {
        for (const auto& c : can)
            if (c.name == name)
                return c;
        throw ValidationError("no CAN channel named " + name);
    }

    const Channel& emission_channel(const std::string& name) const
    {
        for (const auto& c : emissions)
            if (c.name == name)
                return c;
        throw ValidationError("no emission channel named " + name);
    }
};

/**
 * Packs one static operating point: CAN channels trimmed to `duration`,
 * 10 Hz gas channels reduced to 1 Hz, and the cycle ensemble.
 */
inline LogBundle log_operating_point(const std::vector<Channel>& can_channels,
                                     const std::vector<Channel>& gas_channels_10hz,
                                     const std::vector<PressureTrace>& cycles, double duration, bool settled,
                                     std::map<std::string, std::string> meta = {})
{
    if (!settled)
        throw SimulationError("log_operating_point: operating point has not settled; refusing to log");
    LogBundle b;
    for (const auto& c : can_channels) {
        if (std::abs(c.rate - 20.0) > 1e-12)
            throw ValidationError("log_operating_point: CAN channel " + c.name + " is not at 20 Hz");
        auto n = static_cast<std::size_t>(std::llround(duration * c.rate));
        if (c.samples.size() < n)
            throw ValidationError("log_operating_point: CAN channel " + c.name + " is shorter than the log");
        Channel t{c.name, c.rate, {c.samples.begin(), c.samples.begin() + static_cast<std::ptrdiff_t>(n)}};
        b.can.push_back(std::move(t));
    }
    for (const auto& g : gas_channels_10hz) {
        auto n = static_cast<std::size_t>(std::llround(duration * g.rate));
        if (g.samples.size() < n)
            throw ValidationError("log_operating_point: gas channel " + g.name + " is shorter than the log");
        Channel t{g.name, g.rate, {g.samples.begin(), g.samples.begin() + static_cast<std::ptrdiff_t>(n)}};
        b.emissions.push_back(decimate_to_1hz(t));
    }
    b.pressure = ensemble_average(cycles, cycles.size());
    b.meta = std::move(meta);
    return b;
}

inline void write_channels_csv(std::ostream& os, const std::vector<Channel>& channels)
{
    os << "time_s";
    for (const auto& c : channels)
        os << ',' << c.name;
    os << '\n';
    if (channels.empty())
        return;
    std::size_t n = channels.front().samples.size();
    char buf[64];
    for (std::size_t i = 0; i < n; ++i) {
        std::snprintf(buf, sizeof buf, "%.10g", channels.front().samples[i].time);
        os << buf;
        for (const auto& c : channels) {
            std::snprintf(buf, sizeof buf, ",%.10g", i < c.samples.size() ? c.samples[i].value : NAN);
            os << buf;
        }
        os << '\n';
    }
}

} // namespace scooterbench

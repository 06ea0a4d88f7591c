#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "table.hpp"
#include "vehicle_dynamics.hpp"

namespace scooterbench {

enum class Strategy { OR, VC };

inline Strategy parse_strategy(const std::string& s)
{
    if (s == "OR" || s == "or")
        return Strategy::OR;
    if (s == "VC" || s == "vc")
        return Strategy::VC;
    throw ConfigError("unknown restriction strategy '" + s + "'");
}

inline const char* to_string(Strategy s) { return s == Strategy::OR ? "OR" : "VC"; }

inline constexpr double kPi = 3.14159265358979323846;

// crank-angle grid shared by every pressure trace
inline constexpr std::size_t kSamplesPerRev = 1024;
inline constexpr std::size_t kTraceSamples = 2 * kSamplesPerRev;
inline constexpr double kCrankStep = 720.0 / static_cast<double>(kTraceSamples);
inline constexpr std::size_t kTdcIndex = kTraceSamples / 2;      // 0 deg
inline constexpr std::size_t kIvcIndex = kTraceSamples / 4;      // -180 deg, inlet closes
inline constexpr std::size_t kEvoIndex = 3 * kTraceSamples / 4;  // +180 deg, exhaust opens

inline double crank_angle_at(std::size_t i) { return -360.0 + kCrankStep * static_cast<double>(i); }

struct EngineCalibration {
    // geometry
    double displacement = 4.993e-5; // m^3
    double compression_ratio = 10.5;
    double bore = 0.039;            // m
    double stroke = 0.0418;         // m
    double conrod_length = 0.084;   // m
    double max_engine_speed = 8000; // rpm

    Table1D cvt_map{{0.0, 1800.0}, {10.0, 3800.0}, {20.0, 4800.0}, {25.0, 5200.0}, {35.0, 6000.0},
                    {45.0, 7000.0}, {48.7, 7500.0}, {52.0, 8000.0}};
    Table1D mbt_map{{1800.0, 19.41}, {8000.0, 19.41}}; // rpm -> deg BTDC
    // throttle % across, rpm down
    Table2D volumetric_efficiency_map{
        {0.0, 5.0, 16.0, 26.0, 45.0, 50.0, 75.0, 100.0},
        {1800.0, 4000.0, 5200.0, 6000.0, 7000.0, 7500.0, 8000.0},
        {{0.0, 0.09587, 0.23967, 0.31957, 0.42043, 0.46889, 0.51312, 0.55734},
         {0.0, 0.11265, 0.28162, 0.37549, 0.494, 0.55094, 0.60291, 0.65488},
         {0.0, 0.11984, 0.29959, 0.39946, 0.52553, 0.58611, 0.6414, 0.69668},
         {0.0, 0.12343, 0.30858, 0.41145, 0.5413, 0.60369, 0.66064, 0.71758},
         {0.0, 0.12223, 0.30559, 0.40745, 0.53604, 0.59783, 0.65423, 0.71061},
         {0.0, 0.11984, 0.29959, 0.39946, 0.52553, 0.58611, 0.6414, 0.69668},
         {0.0, 0.11504, 0.28761, 0.38348, 0.50451, 0.56267, 0.61574, 0.66881}}};
    double idle_air_flow = 0.8;        // kg/h through the idle bypass
    double intake_air_density = 1.232; // kg/m^3
    Table1D lambda_map{{0.0, 0.999}, {50.0, 0.997}, {100.0, 0.99}}; // throttle % -> lambda target

    double mechanical_efficiency = 0.69758;
    Table1D engine_brake_torque_map{{0.0, 0.0}, {8000.0, 1.49478}}; // rpm -> N m
    double launch_force_limit = 600.0; // N
    double launch_speed_floor = 0.5;   // m/s

    // combustion
    double wiebe_a = 5.0;
    double wiebe_m = 2.0;
    double burn_duration_base = 55.0;        // deg CA
    double burn_duration_per_retard = 0.05;  // deg CA per deg of retard
    double polytropic_exponent = 1.32;
    double combustion_efficiency = 0.83669;    // fraction of fuel energy released in-cylinder
    double intake_temperature = 290.0;       // K at inlet closing
    double gas_constant = 287.0;             // J/(kg K)
    double lhv_fuel = 43.0e6;                // J/kg
    double fuel_density = 0.75;              // kg/l
    double stoich_afr = 14.7;
    double injector_reference_mg = 3.1891;    // fuel per cycle that reads as 100 % duty

    // original restriction
    Table1D or_retard_law{{-0.098937, 29.75}, {0.73012, 20.5}, {1.0, 0.0}}; // load demand -> deg retard
    double or_onset_band = 0.3;      // km/h below the limit over which retard ramps in
    double or_exhaust_burn_gain = 1.0; // fraction per km/h of overspeed
    double or_exhaust_burn_max = 1.0;

    // thermal
    double exhaust_temp_base = 634.27;         // degC
    double exhaust_temp_per_fuel = 35.0;       // degC per kg/h
    double exhaust_temp_per_retard = 9.1938;   // degC per deg
    double exhaust_temp_per_exhaust_burn = 5.0;
    double exhaust_temp_overrun = 120.0;       // degC with fuel cut
    double cylinder_temp_base = 55.8;          // degC
    double cylinder_temp_per_fuel = 25.0;
    double cylinder_temp_per_retard = 0.2;
    double combustion_temp_mbt = 2450.0;       // K
    double combustion_temp_per_retard = 20.0;
    double combustion_temp_per_burn_deg = 10.0;
    double combustion_temp_per_exhaust_burn = 200.0;

    double geometric_displacement() const { return 0.25 * kPi * bore * bore * stroke; }

    void validate() const
    {
        if (!(displacement > 0.0) || std::abs(displacement - 50e-6) > 5e-6)
            throw ConfigError("engine displacement must be within 10 % of 50 cm^3");
        if (std::abs(displacement / geometric_displacement() - 1.0) > 0.02)
            throw ConfigError("engine displacement disagrees with bore and stroke");
        if (!(compression_ratio > 1.0))
            throw ConfigError("compression_ratio must exceed 1");
        if (!(conrod_length > 0.5 * stroke))
            throw ConfigError("conrod_length must exceed the crank radius");
        if (!(mechanical_efficiency > 0.0) || mechanical_efficiency > 1.0)
            throw ConfigError("mechanical_efficiency must be in (0, 1]");
        for (double d : mbt_map.y())
            if (d < 6.0 || d > 40.0)
                throw ConfigError("mbt_map entries must lie within 6..40 deg BTDC");
        if (!cvt_map.non_decreasing())
            throw ConfigError("cvt_map must be non-decreasing");
        const auto& ve = volumetric_efficiency_map.values();
        for (const auto& row : ve)
            for (std::size_t i = 1; i < row.size(); ++i)
                if (!(row[i] > row[i - 1]))
                    throw ConfigError("volumetric efficiency must increase strictly with throttle");
        if (!(idle_air_flow > 0.0))
            throw ConfigError("idle_air_flow must be positive");
        if (!(combustion_efficiency > 0.0) || combustion_efficiency > 1.0)
            throw ConfigError("combustion_efficiency must be in (0, 1]");
        if (!(burn_duration_base > 0.0) || burn_duration_per_retard < 0.0)
            throw ConfigError("burn duration parameters invalid");
        if (!(injector_reference_mg > 0.0))
            throw ConfigError("injector_reference_mg must be positive");
        if (!(stoich_afr > 0.0) || !(fuel_density > 0.0) || !(lhv_fuel > 0.0))
            throw ConfigError("fuel properties must be positive");
        for (double l : lambda_map.y())
            if (l < 0.8 || l > 1.2)
                throw ConfigError("lambda_map targets must lie within 0.8..1.2");
        if (or_onset_band < 0.0 || or_exhaust_burn_gain < 0.0 || or_exhaust_burn_max < 0.0 ||
            or_exhaust_burn_max > 1.0)
            throw ConfigError("original-restriction parameters invalid");
    }

    bool operator==(const EngineCalibration&) const = default;
};

struct EngineState {
    double throttle = 0.0;        // %
    double engine_speed = 0.0;    // rpm
    double ignition_offset = 0.0; // deg retard from MBT
    double air_flow = 0.0;        // kg/h
    double fuel_flow = 0.0;       // kg/h
    double lambda = 1.0;
    double injector_duty = 0.0;   // %
    double cylinder_temp = 0.0;   // degC
    double exhaust_temp = 0.0;    // degC
    double combustion_temp = 0.0; // K
    double exhaust_burn_fraction = 0.0; // share of injected fuel energy released in the exhaust
};

struct PressureTrace {
    std::vector<double> crank_angle; // deg
    std::vector<double> pressure;    // bar

    std::size_t size() const { return pressure.size(); }
};

inline PressureTrace make_empty_trace()
{
    PressureTrace t;
    t.crank_angle.resize(kTraceSamples);
    t.pressure.assign(kTraceSamples, 0.0);
    for (std::size_t i = 0; i < kTraceSamples; ++i)
        t.crank_angle[i] = crank_angle_at(i);
    return t;
}

inline void write_csv(std::ostream& os, const PressureTrace& trace, const char* value_column = "pressure_bar")
{
    os << "crank_deg," << value_column << "\n";
    char buf[96];
    for (std::size_t i = 0; i < trace.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.10g,%.10g\n", trace.crank_angle[i], trace.pressure[i]);
        os << buf;
    }
}

/// Slider-crank volumes on the standard grid plus the per-step polytropic factors.
class CylinderGeometry {
public:
    explicit CylinderGeometry(const EngineCalibration& c)
        : bore_(c.bore), stroke_(c.stroke), conrod_(c.conrod_length)
    {
        double swept = c.geometric_displacement();
        clearance_ = swept / (c.compression_ratio - 1.0);
        for (std::size_t i = 0; i < kTraceSamples; ++i)
            volume_[i] = volume(crank_angle_at(i));
        poly_[0] = 1.0;
        for (std::size_t i = 1; i < kTraceSamples; ++i)
            poly_[i] = std::pow(volume_[i - 1] / volume_[i], c.polytropic_exponent);
    }

    double volume(double crank_deg) const
    {
        double th = crank_deg * kPi / 180.0;
        double r = 0.5 * stroke_;
        double s = std::sin(th);
        double x = r + conrod_ - (r * std::cos(th) + std::sqrt(conrod_ * conrod_ - r * r * s * s));
        return clearance_ + 0.25 * kPi * bore_ * bore_ * x;
    }

    double grid_volume(std::size_t i) const { return volume_[i]; }
    double polytropic_factor(std::size_t i) const { return poly_[i]; }
    double clearance_volume() const { return clearance_; }

private:
    double bore_, stroke_, conrod_, clearance_;
    std::array<double, kTraceSamples> volume_{};
    std::array<double, kTraceSamples> poly_{};
};

inline double cvt_engine_speed(const EngineCalibration& calib, double v_kmh)
{
    if (v_kmh < 0.0)
        throw DomainError("cvt_engine_speed: negative velocity");
    return std::min(calib.cvt_map(v_kmh), calib.max_engine_speed);
}

inline double air_mass_flow(const EngineCalibration& calib, double throttle, double engine_speed)
{
    if (throttle < 0.0 || throttle > 100.0)
        throw DomainError("air_mass_flow: throttle outside 0..100 %");
    if (engine_speed < 0.0)
        throw DomainError("air_mass_flow: negative engine speed");
    double ve = calib.volumetric_efficiency_map(throttle, engine_speed);
    double swept_m3_per_h = calib.displacement * (engine_speed / 2.0) * 60.0;
    return calib.idle_air_flow + swept_m3_per_h * calib.intake_air_density * ve;
}

/// kg of fuel per four-stroke cycle at the given mass flow in kg/h.
inline double mass_per_cycle(double flow_kgh, double engine_speed)
{
    if (engine_speed <= 0.0)
        return 0.0;
    return flow_kgh / 3600.0 / (engine_speed / 120.0);
}

struct Injection {
    double fuel_flow;     // kg/h
    double injector_duty; // %
};

inline Injection injection_for_lambda(const EngineCalibration& calib, double air_flow, double lambda_target,
                                      double engine_speed)
{
    if (lambda_target <= 0.0)
        throw DomainError("injection_for_lambda: lambda must be positive");
    if (lambda_target < 0.8 || lambda_target > 1.2)
        throw DomainError("injection_for_lambda: lambda target outside 0.8..1.2");
    if (air_flow < 0.0)
        throw DomainError("injection_for_lambda: negative air flow");
    double fuel = air_flow / (calib.stoich_afr * lambda_target);
    double duty = 100.0 * mass_per_cycle(fuel, engine_speed) * 1e6 / calib.injector_reference_mg;
    return {fuel, duty};
}

/**
 * Ignition retard commanded by the restriction.  VC never retards.  OR follows
 * its load-demand law, ramped in over `or_onset_band` km/h below the limit.
 */
inline double restriction_ignition_offset(const EngineCalibration& calib, Strategy strategy, double v_kmh,
                                          double v_limit, double load_demand)
{
    if (v_kmh < 0.0)
        throw DomainError("restriction_ignition_offset: negative velocity");
    if (strategy == Strategy::VC)
        return 0.0;
    double onset = v_limit - calib.or_onset_band;
    if (v_kmh < onset)
        return 0.0;
    double ramp = calib.or_onset_band > 0.0 ? std::min(1.0, (v_kmh - onset) / calib.or_onset_band) : 1.0;
    return ramp * std::max(0.0, calib.or_retard_law(load_demand));
}

inline double restriction_ignition_offset(const EngineCalibration& calib, const std::string& strategy, double v_kmh,
                                          double v_limit, double load_demand)
{
    return restriction_ignition_offset(calib, parse_strategy(strategy), v_kmh, v_limit, load_demand);
}

/// OR overspeed governor: share of the injected fuel left to burn in the exhaust.
inline double or_exhaust_burn_fraction(const EngineCalibration& calib, double v_kmh, double v_limit)
{
    return std::clamp(calib.or_exhaust_burn_gain * (v_kmh - v_limit), 0.0, calib.or_exhaust_burn_max);
}

inline double burn_duration(const EngineCalibration& calib, double ignition_offset)
{
    return calib.burn_duration_base + calib.burn_duration_per_retard * ignition_offset;
}

inline double ignition_angle(const EngineCalibration& calib, double engine_speed, double ignition_offset)
{
    return -(calib.mbt_map(engine_speed) - ignition_offset);
}

inline double wiebe_fraction(double crank_deg, double theta_ign, double duration, double a, double m)
{
    if (crank_deg <= theta_ign)
        return 0.0;
    return 1.0 - std::exp(-a * std::pow((crank_deg - theta_ign) / duration, m + 1.0));
}

/// Single-zone cycle: polytropic compression/expansion plus Wiebe heat release, gas exchange at inlet pressure.
inline PressureTrace synthesize_pressure_trace(const EngineCalibration& calib, const CylinderGeometry& geom,
                                               const EngineState& state, double heat_scale = 1.0)
{
    if (!(state.engine_speed > 0.0))
        throw DomainError("synthesize_pressure_trace: engine speed must be positive");

    PressureTrace tr = make_empty_trace();
    double m_air = mass_per_cycle(state.air_flow, state.engine_speed);
    double m_fuel = mass_per_cycle(state.fuel_flow, state.engine_speed);
    double p_ivc = (m_air + m_fuel) * calib.gas_constant * calib.intake_temperature / geom.grid_volume(kIvcIndex);
    if (!(p_ivc > 0.0))
        throw DomainError("synthesize_pressure_trace: no trapped charge");

    double q_total = m_fuel * calib.lhv_fuel * calib.combustion_efficiency *
                     (1.0 - state.exhaust_burn_fraction) * heat_scale;
    double th_ign = ignition_angle(calib, state.engine_speed, state.ignition_offset);
    double dur = burn_duration(calib, state.ignition_offset);
    const double g1 = calib.polytropic_exponent - 1.0;

    std::vector<double> p(kTraceSamples, p_ivc);
    double x_prev = 0.0;
    for (std::size_t i = kIvcIndex + 1; i <= kEvoIndex; ++i) {
        double x = wiebe_fraction(tr.crank_angle[i], th_ign, dur, calib.wiebe_a, calib.wiebe_m);
        double dq = q_total * (x - x_prev);
        x_prev = x;
        p[i] = p[i - 1] * geom.polytropic_factor(i) + g1 * dq / geom.grid_volume(i);
    }
    for (std::size_t i = 0; i < kTraceSamples; ++i)
        tr.pressure[i] = p[i] * 1e-5;
    return tr;
}

inline PressureTrace synthesize_pressure_trace(const EngineCalibration& calib, const EngineState& state,
                                               double heat_scale = 1.0)
{
    return synthesize_pressure_trace(calib, CylinderGeometry(calib), state, heat_scale);
}

/// Closed-loop work over the whole cycle divided by displacement, in bar.
inline double imep(const PressureTrace& trace, const EngineCalibration& calib)
{
    const std::size_t n = trace.size();
    if (n < 2 || trace.crank_angle.size() != n)
        throw ValidationError("imep: malformed trace");
    CylinderGeometry geom(calib);
    double work = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t j = (i + 1) % n;
        double vi = geom.volume(trace.crank_angle[i]);
        double vj = geom.volume(trace.crank_angle[j]);
        work += 0.5 * (trace.pressure[i] + trace.pressure[j]) * 1e5 * (vj - vi);
    }
    return work / calib.displacement * 1e-5;
}

/// Same as imep() for traces on the standard grid, reusing cached volumes.
inline double imep(const PressureTrace& trace, const EngineCalibration& calib, const CylinderGeometry& geom)
{
    if (trace.size() != kTraceSamples)
        return imep(trace, calib);
    double work = 0.0;
    for (std::size_t i = 0; i < kTraceSamples; ++i) {
        std::size_t j = (i + 1) % kTraceSamples;
        work += 0.5 * (trace.pressure[i] + trace.pressure[j]) * (geom.grid_volume(j) - geom.grid_volume(i));
    }
    return work / calib.displacement;
}

inline double indicated_power(double imep_bar, double engine_speed, const EngineCalibration& calib)
{
    if (imep_bar < 0.0)
        throw DomainError("indicated_power: negative imep");
    return imep_bar * 1e5 * calib.displacement * (engine_speed / 60.0) / 2.0;
}

inline double peak_pressure(const PressureTrace& trace)
{
    return *std::max_element(trace.pressure.begin(), trace.pressure.end());
}

inline double peak_pressure_angle(const PressureTrace& trace)
{
    auto it = std::max_element(trace.pressure.begin(), trace.pressure.end());
    return trace.crank_angle[static_cast<std::size_t>(it - trace.pressure.begin())];
}

/// Engine braking reflected to the wheel, N (positive number, acts against motion).
inline double engine_drag_force(const EngineCalibration& calib, double engine_speed, double v_kmh)
{
    double v = std::max(v_kmh / kKmhPerMs, calib.launch_speed_floor);
    double omega = 2.0 * kPi * engine_speed / 60.0;
    return std::min(calib.engine_brake_torque_map(engine_speed) * omega / v, calib.launch_force_limit);
}

inline double tractive_force(const EngineCalibration& calib, const EngineState& state, const PressureTrace& trace,
                             double v_kmh)
{
    double p_ind = indicated_power(std::max(0.0, imep(trace, calib)), state.engine_speed, calib);
    double v = std::max(v_kmh / kKmhPerMs, calib.launch_speed_floor);
    double drive = std::min(calib.mechanical_efficiency * p_ind / v, calib.launch_force_limit);
    return drive - engine_drag_force(calib, state.engine_speed, v_kmh);
}

struct ThermalOutputs {
    double cylinder_temp;   // degC
    double exhaust_temp;    // degC
    double combustion_temp; // K
};

inline ThermalOutputs thermal_model(const EngineCalibration& calib, const EngineState& state)
{
    ThermalOutputs out{};
    const double offset = state.ignition_offset;
    const double burn = state.exhaust_burn_fraction;
    if (state.fuel_flow > 0.0) {
        out.exhaust_temp = calib.exhaust_temp_base + calib.exhaust_temp_per_fuel * state.fuel_flow +
                           calib.exhaust_temp_per_retard * offset + calib.exhaust_temp_per_exhaust_burn * burn;
    } else {
        out.exhaust_temp = calib.exhaust_temp_overrun;
    }
    out.cylinder_temp = calib.cylinder_temp_base + calib.cylinder_temp_per_fuel * state.fuel_flow +
                        calib.cylinder_temp_per_retard * offset;
    double longer_burn = burn_duration(calib, offset) - calib.burn_duration_base;
    out.combustion_temp = calib.combustion_temp_mbt - calib.combustion_temp_per_retard * offset -
                          calib.combustion_temp_per_burn_deg * longer_burn -
                          calib.combustion_temp_per_exhaust_burn * burn;
    return out;
}

struct OperatingPoint {
    EngineState state;
    PressureTrace trace;
    double imep = 0.0;             // bar
    double indicated_power = 0.0;  // W
    double tractive_force = 0.0;   // N at the wheel, net of engine braking
    double vehicle_speed = 0.0;    // km/h
};

/// Engine plus CVT evaluated at one vehicle speed; geometry is computed once.
class EngineModel {
public:
    explicit EngineModel(EngineCalibration calib) : calib_(std::move(calib)), geom_(calib_) {}

    const EngineCalibration& calibration() const { return calib_; }
    const CylinderGeometry& geometry() const { return geom_; }

    EngineState state_at(double throttle, double v_kmh, double ignition_offset, double exhaust_burn) const
    {
        EngineState s;
        s.throttle = std::clamp(throttle, 0.0, 100.0);
        s.engine_speed = cvt_engine_speed(calib_, v_kmh);
        s.ignition_offset = ignition_offset;
        s.exhaust_burn_fraction = exhaust_burn;
        s.air_flow = air_mass_flow(calib_, s.throttle, s.engine_speed);
        s.lambda = calib_.lambda_map(s.throttle);
        Injection inj = injection_for_lambda(calib_, s.air_flow, s.lambda, s.engine_speed);
        s.fuel_flow = inj.fuel_flow;
        s.injector_duty = inj.injector_duty;
        ThermalOutputs th = thermal_model(calib_, s);
        s.cylinder_temp = th.cylinder_temp;
        s.exhaust_temp = th.exhaust_temp;
        s.combustion_temp = th.combustion_temp;
        return s;
    }

    OperatingPoint evaluate(double throttle, double v_kmh, double ignition_offset = 0.0, double exhaust_burn = 0.0,
                            double heat_scale = 1.0) const
    {
        OperatingPoint op;
        op.vehicle_speed = v_kmh;
        op.state = state_at(throttle, v_kmh, ignition_offset, exhaust_burn);
        op.trace = synthesize_pressure_trace(calib_, geom_, op.state, heat_scale);
        op.imep = imep(op.trace, calib_, geom_);
        op.indicated_power = indicated_power(std::max(0.0, op.imep), op.state.engine_speed, calib_);
        double v = std::max(v_kmh / kKmhPerMs, calib_.launch_speed_floor);
        double drive = std::min(calib_.mechanical_efficiency * op.indicated_power / v, calib_.launch_force_limit);
        op.tractive_force = drive - engine_drag_force(calib_, op.state.engine_speed, v_kmh);
        return op;
    }

    /// Net wheel force at wide-open throttle and MBT timing.
    double full_load_force(double v_kmh) const { return evaluate(100.0, v_kmh).tractive_force; }

private:
    EngineCalibration calib_;
    CylinderGeometry geom_;
};

} // namespace scooterbench

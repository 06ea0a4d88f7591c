#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "daq.hpp"
#include "emissions.hpp"
#include "errors.hpp"
#include "powertrain.hpp"
#include "table.hpp"
#include "vehicle_dynamics.hpp"
#include "velocity_control.hpp"

namespace scooterbench {

struct ControllerConfig {
    PiController pi;
    TbwActuator actuator;
    double control_rate = 20.0; // Hz

    bool operator==(const ControllerConfig& o) const
    {
        auto same_stage = [](const GainStage& a, const GainStage& b) {
            return a.min_abs_error == b.min_abs_error && a.kp == b.kp && a.ki == b.ki;
        };
        if (pi.gain_schedule.size() != o.pi.gain_schedule.size())
            return false;
        for (std::size_t i = 0; i < pi.gain_schedule.size(); ++i)
            if (!same_stage(pi.gain_schedule[i], o.pi.gain_schedule[i]))
                return false;
        return pi.kp == o.pi.kp && pi.ki == o.pi.ki && pi.output_min == o.pi.output_min &&
               pi.output_max == o.pi.output_max && pi.setpoint == o.pi.setpoint &&
               actuator.response_time == o.actuator.response_time && actuator.accuracy == o.actuator.accuracy &&
               control_rate == o.control_rate;
    }
};

struct DaqConfig {
    int cycles = 60;
    double heat_release_noise = 0.02; // relative 1-sigma, cycle to cycle
    double tick_jitter = 0.01;        // fraction of the tick period
    double speed_window = 0.1;        // s
    Table1D lambda_table = default_lambda_table();
    double lambda_sensor_noise = 0.002; // V

    bool operator==(const DaqConfig&) const = default;
};

struct CoastdownConfig {
    double v0 = 50.0;     // km/h
    double grade = 0.0;  // magnitude of the opposite-direction grade pair
    double noise = 0.0;   // relative velocity noise
    std::uint64_t seed = 42;
    double dt = 0.01;     // s

    bool operator==(const CoastdownConfig&) const = default;
};

/// Sweep defaults follow the dynamometer test plan: 1 % steps down to -8 %, 0.5 % steps up to +2 %.
inline std::vector<double> default_sweep_grades()
{
    return {-0.08, -0.07, -0.06, -0.05, -0.04, -0.03, -0.02, -0.01, 0.0, 0.005, 0.01, 0.015, 0.02};
}

struct SweepConfig {
    std::vector<double> grades = default_sweep_grades();
    std::string strategy = "both";
    double v_limit = 48.7;         // km/h
    std::uint64_t seed = 1;
    double settle_timeout = 120.0; // s
    double log_duration = 10.0;    // s
    double vc_settle_band = 0.2;   // km/h
    double or_settle_band = 0.5;   // km/h
    double settle_window = 10.0;   // s
    double settle_drift = 0.05;    // km/h, net change allowed across the window

    bool operator==(const SweepConfig&) const = default;
};

struct DynoConfig {
    std::vector<double> speeds{25.0, 35.0, 45.0};
    double duration = 60.0; // s of cruise before the throttle is read

    bool operator==(const DynoConfig&) const = default;
};

struct HarnessConfig {
    VehicleParams vehicle;
    ResistanceCurve road_load;
    EngineCalibration engine;
    ControllerConfig controller;
    EmissionsCalibration emissions;
    EfmModel efm;
    DaqConfig daq;
    CoastdownConfig coastdown;
    SweepConfig sweep;
    DynoConfig dyno;

    void validate() const
    {
        vehicle.validate();
        road_load.validate();
        engine.validate();
        emissions.validate();
        efm.validate();
        if (!(controller.control_rate > 0.0))
            throw ConfigError("controller.control_rate must be positive");
        if (!(controller.actuator.response_time > 0.0))
            throw ConfigError("controller.actuator_response_time must be positive");
        if (controller.pi.output_min >= controller.pi.output_max)
            throw ConfigError("controller output range is empty");
        if (daq.cycles < 1)
            throw ConfigError("daq.cycles must be at least 1");
        for (double g : sweep.grades)
            if (g < -0.08 - 1e-12 || g > 0.02 + 1e-12)
                throw ConfigError("sweep grades must lie within -0.08..0.02");
        if (sweep.grades.empty())
            throw ConfigError("sweep.grades is empty");
        parse_strategy_set(sweep.strategy);
        if (!(sweep.log_duration > 0.0) || !(sweep.settle_timeout > sweep.log_duration))
            throw ConfigError("sweep.settle_timeout must exceed sweep.log_duration > 0");
        if (!(sweep.settle_window > 0.0) || !(sweep.settle_drift > 0.0) ||
            !(sweep.vc_settle_band > 0.0) || !(sweep.or_settle_band > 0.0))
            throw ConfigError("sweep settle window, drift and bands must be positive");
        if (std::abs(sweep.log_duration - std::round(sweep.log_duration)) > 1e-12)
            throw ConfigError("sweep.log_duration must be a whole number of seconds");
        for (double v : dyno.speeds)
            if (!(v > 0.0))
                throw ConfigError("dyno.speeds must be positive");
    }

    static std::vector<Strategy> parse_strategy_set(const std::string& s)
    {
        if (s == "both" || s == "BOTH")
            return {Strategy::OR, Strategy::VC};
        return {parse_strategy(s)};
    }

    bool operator==(const HarnessConfig&) const = default;
};

namespace config_detail {

inline std::string fmt(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

inline std::string trim(const std::string& s)
{
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos)
        return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep)
{
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(s);
    while (std::getline(is, cur, sep))
        out.push_back(trim(cur));
    if (!s.empty() && s.back() == sep)
        out.emplace_back();
    return out;
}

inline double to_double(const std::string& key, const std::string& text)
{
    try {
        std::size_t pos = 0;
        double v = std::stod(text, &pos);
        if (trim(text.substr(pos)).empty())
            return v;
    } catch (const std::exception&) {
    }
    throw ConfigError("config key '" + key + "': '" + text + "' is not a number");
}

inline std::vector<double> to_list(const std::string& key, const std::string& text)
{
    std::vector<double> out;
    for (const auto& item : split(text, ','))
        out.push_back(to_double(key, item));
    return out;
}

inline std::string list_text(const std::vector<double>& v)
{
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i)
        s += (i ? ", " : "") + fmt(v[i]);
    return s;
}

/// "x:y, x:y, ..."
inline Table1D to_table1d(const std::string& key, const std::string& text)
{
    std::vector<double> x, y;
    for (const auto& item : split(text, ',')) {
        auto parts = split(item, ':');
        if (parts.size() != 2)
            throw ConfigError("config key '" + key + "': expected x:y pairs, got '" + item + "'");
        x.push_back(to_double(key, parts[0]));
        y.push_back(to_double(key, parts[1]));
    }
    try {
        return Table1D(std::move(x), std::move(y));
    } catch (const ValidationError& e) {
        throw ConfigError("config key '" + key + "': " + e.what());
    }
}

inline std::string table1d_text(const Table1D& t)
{
    std::string s;
    for (std::size_t i = 0; i < t.size(); ++i)
        s += (i ? ", " : "") + fmt(t.x()[i]) + ":" + fmt(t.y()[i]);
    return s;
}

/// Rows separated by ';', values by ','.
inline std::vector<std::vector<double>> to_rows(const std::string& key, const std::string& text)
{
    std::vector<std::vector<double>> rows;
    for (const auto& r : split(text, ';'))
        rows.push_back(to_list(key, r));
    return rows;
}

inline std::string rows_text(const std::vector<std::vector<double>>& rows)
{
    std::string s;
    for (std::size_t j = 0; j < rows.size(); ++j)
        s += (j ? "; " : "") + list_text(rows[j]);
    return s;
}

/// "min_abs_error:kp:ki, ..."
inline std::vector<GainStage> to_schedule(const std::string& key, const std::string& text)
{
    std::vector<GainStage> out;
    if (trim(text).empty())
        return out;
    for (const auto& item : split(text, ',')) {
        auto p = split(item, ':');
        if (p.size() != 3)
            throw ConfigError("config key '" + key + "': expected error:kp:ki triples, got '" + item + "'");
        out.push_back({to_double(key, p[0]), to_double(key, p[1]), to_double(key, p[2])});
    }
    return out;
}

inline std::string schedule_text(const std::vector<GainStage>& s)
{
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i)
        out += (i ? ", " : "") + fmt(s[i].min_abs_error) + ":" + fmt(s[i].kp) + ":" + fmt(s[i].ki);
    return out;
}

struct Field {
    std::string section;
    std::string key;
    std::function<std::string()> get;
    std::function<void(const std::string&)> set;
};

class Binder {
public:
    explicit Binder(std::vector<Field>& out) : out_(out) {}

    void section(std::string s) { section_ = std::move(s); }

    void num(const std::string& key, double& v)
    {
        std::string qk = section_ + "." + key;
        out_.push_back({section_, key, [&v] { return fmt(v); }, [&v, qk](const std::string& t) { v = to_double(qk, t); }});
    }

    void integer(const std::string& key, int& v)
    {
        std::string qk = section_ + "." + key;
        out_.push_back({section_, key, [&v] { return std::to_string(v); }, [&v, qk](const std::string& t) {
                            double d = to_double(qk, t);
                            if (d != std::floor(d))
                                throw ConfigError("config key '" + qk + "' must be an integer");
                            v = static_cast<int>(d);
                        }});
    }

    void seed(const std::string& key, std::uint64_t& v)
    {
        std::string qk = section_ + "." + key;
        out_.push_back({section_, key, [&v] { return std::to_string(v); }, [&v, qk](const std::string& t) {
                            try {
                                std::size_t pos = 0;
                                v = std::stoull(t, &pos);
                                if (pos == t.size())
                                    return;
                            } catch (const std::exception&) {
                            }
                            throw ConfigError("config key '" + qk + "': '" + t + "' is not an unsigned integer");
                        }});
    }

    void text(const std::string& key, std::string& v)
    {
        out_.push_back({section_, key, [&v] { return v; }, [&v](const std::string& t) { v = t; }});
    }

    void list(const std::string& key, std::vector<double>& v)
    {
        std::string qk = section_ + "." + key;
        out_.push_back({section_, key, [&v] { return list_text(v); }, [&v, qk](const std::string& t) { v = to_list(qk, t); }});
    }

    void table(const std::string& key, Table1D& v)
    {
        std::string qk = section_ + "." + key;
        out_.push_back({section_, key, [&v] { return table1d_text(v); },
                        [&v, qk](const std::string& t) { v = to_table1d(qk, t); }});
    }

    void schedule(const std::string& key, std::vector<GainStage>& v)
    {
        std::string qk = section_ + "." + key;
        out_.push_back({section_, key, [&v] { return schedule_text(v); },
                        [&v, qk](const std::string& t) { v = to_schedule(qk, t); }});
    }

    /// A 2-D table occupies three keys; the table is rebuilt once all of them are applied.
    void table2d(const std::string& key, Table2D& v)
    {
        struct Parts {
            std::vector<double> x, y;
            std::vector<std::vector<double>> rows;
            bool touched = false;
        };
        auto p = std::make_shared<Parts>(Parts{v.x(), v.y(), v.values(), false});
        std::string qk = section_ + "." + key;
        out_.push_back({section_, key + "_throttle", [&v] { return list_text(v.x()); },
                        [p, qk](const std::string& t) { p->x = to_list(qk, t); p->touched = true; }});
        out_.push_back({section_, key + "_rpm", [&v] { return list_text(v.y()); },
                        [p, qk](const std::string& t) { p->y = to_list(qk, t); p->touched = true; }});
        out_.push_back({section_, key, [&v] { return rows_text(v.values()); },
                        [p, qk](const std::string& t) { p->rows = to_rows(qk, t); p->touched = true; }});
        finalizers_.push_back([&v, p, qk] {
            if (!p->touched)
                return;
            try {
                v = Table2D(p->x, p->y, p->rows);
            } catch (const ValidationError& e) {
                throw ConfigError("config key '" + qk + "': " + e.what());
            }
        });
    }

    std::vector<std::function<void()>> take_finalizers() { return std::move(finalizers_); }

private:
    std::vector<Field>& out_;
    std::vector<std::function<void()>> finalizers_;
    std::string section_;
};

} // namespace config_detail

struct BoundConfig {
    std::vector<config_detail::Field> fields;
    std::vector<std::function<void()>> finalizers;
};

/// Every configurable value, in file order.
inline BoundConfig config_fields(HarnessConfig& c)
{
    std::vector<config_detail::Field> f;
    config_detail::Binder b(f);

    b.section("vehicle");
    b.num("frontal_area", c.vehicle.frontal_area);
    b.num("tyre_pressure", c.vehicle.tyre_pressure);
    b.num("inertia_factor", c.vehicle.inertia_factor);
    b.num("mass_scooter", c.vehicle.mass_scooter);
    b.num("mass_rider", c.vehicle.mass_rider);
    b.num("air_density", c.vehicle.air_density);
    b.num("drag_coeff", c.vehicle.drag_coeff);
    b.num("rolling_coeff", c.vehicle.rolling_coeff);
    b.num("road_quad_coeff", c.road_load.quad_coeff);
    b.num("road_const_coeff", c.road_load.const_coeff);

    auto& e = c.engine;
    b.section("engine");
    b.num("displacement", e.displacement);
    b.num("compression_ratio", e.compression_ratio);
    b.num("bore", e.bore);
    b.num("stroke", e.stroke);
    b.num("conrod_length", e.conrod_length);
    b.num("max_engine_speed", e.max_engine_speed);
    b.table("cvt_map", e.cvt_map);
    b.table("mbt_map", e.mbt_map);
    b.table2d("volumetric_efficiency", e.volumetric_efficiency_map);
    b.num("idle_air_flow", e.idle_air_flow);
    b.num("intake_air_density", e.intake_air_density);
    b.table("lambda_map", e.lambda_map);
    b.num("mechanical_efficiency", e.mechanical_efficiency);
    b.table("engine_brake_torque_map", e.engine_brake_torque_map);
    b.num("launch_force_limit", e.launch_force_limit);
    b.num("launch_speed_floor", e.launch_speed_floor);
    b.num("wiebe_a", e.wiebe_a);
    b.num("wiebe_m", e.wiebe_m);
    b.num("burn_duration_base", e.burn_duration_base);
    b.num("burn_duration_per_retard", e.burn_duration_per_retard);
    b.num("polytropic_exponent", e.polytropic_exponent);
    b.num("combustion_efficiency", e.combustion_efficiency);
    b.num("intake_temperature", e.intake_temperature);
    b.num("gas_constant", e.gas_constant);
    b.num("lhv_fuel", e.lhv_fuel);
    b.num("fuel_density", e.fuel_density);
    b.num("stoich_afr", e.stoich_afr);
    b.num("injector_reference_mg", e.injector_reference_mg);
    b.table("or_retard_law", e.or_retard_law);
    b.num("or_onset_band", e.or_onset_band);
    b.num("or_exhaust_burn_gain", e.or_exhaust_burn_gain);
    b.num("or_exhaust_burn_max", e.or_exhaust_burn_max);
    b.num("exhaust_temp_base", e.exhaust_temp_base);
    b.num("exhaust_temp_per_fuel", e.exhaust_temp_per_fuel);
    b.num("exhaust_temp_per_retard", e.exhaust_temp_per_retard);
    b.num("exhaust_temp_per_exhaust_burn", e.exhaust_temp_per_exhaust_burn);
    b.num("exhaust_temp_overrun", e.exhaust_temp_overrun);
    b.num("cylinder_temp_base", e.cylinder_temp_base);
    b.num("cylinder_temp_per_fuel", e.cylinder_temp_per_fuel);
    b.num("cylinder_temp_per_retard", e.cylinder_temp_per_retard);
    b.num("combustion_temp_mbt", e.combustion_temp_mbt);
    b.num("combustion_temp_per_retard", e.combustion_temp_per_retard);
    b.num("combustion_temp_per_burn_deg", e.combustion_temp_per_burn_deg);
    b.num("combustion_temp_per_exhaust_burn", e.combustion_temp_per_exhaust_burn);

    b.section("controller");
    b.num("kp", c.controller.pi.kp);
    b.num("ki", c.controller.pi.ki);
    b.schedule("gain_schedule", c.controller.pi.gain_schedule);
    b.num("output_min", c.controller.pi.output_min);
    b.num("output_max", c.controller.pi.output_max);
    b.num("setpoint", c.controller.pi.setpoint);
    b.num("control_rate", c.controller.control_rate);
    b.num("actuator_response_time", c.controller.actuator.response_time);
    b.num("actuator_accuracy", c.controller.actuator.accuracy);

    auto& m = c.emissions;
    b.section("emissions");
    b.num("reference_temp", m.reference_temp);
    b.num("co_ref_ppm", m.co_ref_ppm);
    b.num("co_temp_scale", m.co_temp_scale);
    b.num("co_lambda_width", m.co_lambda_width);
    b.num("hc_ref_ppm", m.hc_ref_ppm);
    b.num("hc_temp_scale", m.hc_temp_scale);
    b.num("hc_lambda_width", m.hc_lambda_width);
    b.num("nox_ref_ppm", m.nox_ref_ppm);
    b.num("nox_activation_temp", m.nox_activation_temp);
    b.num("nox_lambda_peak", m.nox_lambda_peak);
    b.num("nox_lambda_width", m.nox_lambda_width);
    b.num("o2_floor_pct", m.o2_floor_pct);
    b.num("o2_lean_slope", m.o2_lean_slope);
    b.num("o2_softness", m.o2_softness);
    b.num("co2_stoich_pct", m.co2_stoich_pct);
    b.num("hc_carbon_number", m.hc_carbon_number);
    b.num("cat_co_min", m.cat_co_min);
    b.num("cat_co_max", m.cat_co_max);
    b.num("cat_co_mid", m.cat_co_mid);
    b.num("cat_co_width", m.cat_co_width);
    b.num("cat_hc_min", m.cat_hc_min);
    b.num("cat_hc_max", m.cat_hc_max);
    b.num("cat_hc_mid", m.cat_hc_mid);
    b.num("cat_hc_width", m.cat_hc_width);
    b.num("cat_nox_max", m.cat_nox_max);
    b.num("cat_nox_mid", m.cat_nox_mid);
    b.num("cat_nox_width", m.cat_nox_width);
    b.num("exhaust_molar_mass", m.exhaust_molar_mass);
    b.num("ambient_pressure", m.ambient_pressure);
    b.num("ambient_temp", m.ambient_temp);
    b.num("sample_cooling", m.sample_cooling);
    b.num("molar_mass_co", m.molar_mass_co);
    b.num("molar_mass_co2", m.molar_mass_co2);
    b.num("molar_mass_hc", m.molar_mass_hc);
    b.num("molar_mass_nox", m.molar_mass_nox);
    b.num("limit_co", m.limit_co);
    b.num("limit_hc", m.limit_hc);
    b.num("limit_nox", m.limit_nox);
    b.num("improvement_neutral_band", m.improvement_neutral_band);
    b.num("analyzer_noise", m.analyzer_noise);

    b.section("efm");
    b.num("range_min", c.efm.range_min);
    b.num("range_max", c.efm.range_max);
    b.num("plausibility_floor", c.efm.plausibility_floor);
    b.num("noise_rms", c.efm.noise_rms);

    b.section("daq");
    b.integer("cycles", c.daq.cycles);
    b.num("heat_release_noise", c.daq.heat_release_noise);
    b.num("tick_jitter", c.daq.tick_jitter);
    b.num("speed_window", c.daq.speed_window);
    b.table("lambda_table", c.daq.lambda_table);
    b.num("lambda_sensor_noise", c.daq.lambda_sensor_noise);

    b.section("coastdown");
    b.num("v0", c.coastdown.v0);
    b.num("grade", c.coastdown.grade);
    b.num("noise", c.coastdown.noise);
    b.seed("seed", c.coastdown.seed);
    b.num("dt", c.coastdown.dt);

    b.section("sweep");
    b.list("grades", c.sweep.grades);
    b.text("strategy", c.sweep.strategy);
    b.num("v_limit", c.sweep.v_limit);
    b.seed("seed", c.sweep.seed);
    b.num("settle_timeout", c.sweep.settle_timeout);
    b.num("log_duration", c.sweep.log_duration);
    b.num("vc_settle_band", c.sweep.vc_settle_band);
    b.num("or_settle_band", c.sweep.or_settle_band);
    b.num("settle_window", c.sweep.settle_window);
    b.num("settle_drift", c.sweep.settle_drift);

    b.section("dyno");
    b.list("speeds", c.dyno.speeds);
    b.num("duration", c.dyno.duration);
    return {std::move(f), b.take_finalizers()};
}

/// Applies `key = value` overrides from an INI stream on top of `base`.
inline HarnessConfig parse_config(std::istream& is, HarnessConfig base = {})
{
    boost::property_tree::ptree tree;
    try {
        boost::property_tree::ini_parser::read_ini(is, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError(std::string("config syntax: ") + e.what());
    }
    auto bound = config_fields(base);
    auto& fields = bound.fields;
    for (const auto& [section, body] : tree) {
        if (body.empty() && !body.data().empty())
            throw ConfigError("config key '" + section + "' appears outside a section");
        bool known_section = false;
        for (const auto& f : fields)
            known_section = known_section || f.section == section;
        if (!known_section)
            throw ConfigError("unknown config section [" + section + "]");
        for (const auto& [key, value] : body) {
            auto it = std::find_if(fields.begin(), fields.end(),
                                   [&](const config_detail::Field& f) { return f.section == section && f.key == key; });
            if (it == fields.end())
                throw ConfigError("unknown config key '" + section + "." + key + "'");
            it->set(config_detail::trim(value.data()));
        }
    }
    for (auto& fin : bound.finalizers)
        fin();
    base.validate();
    return base;
}

inline HarnessConfig load_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open config file " + path);
    return parse_config(in);
}

/// Canonical text of a configuration; parse_config(write_config(c)) == c.
inline void write_config(std::ostream& os, const HarnessConfig& cfg)
{
    HarnessConfig copy = cfg;
    std::string current;
    os << "# scooterbench configuration. Every key is optional; omitted keys keep the built-in value.\n"
          "# Tables are written as x:y pairs, 2-D tables as ';'-separated rows, gain schedules as err:kp:ki.\n\n";
    for (const auto& f : config_fields(copy).fields) {
        if (f.section != current) {
            os << (current.empty() ? "" : "\n") << '[' << f.section << "]\n";
            current = f.section;
        }
        os << f.key << " = " << f.get() << '\n';
    }
}

} // namespace scooterbench

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "config.hpp"
#include "daq.hpp"
#include "emissions.hpp"
#include "errors.hpp"
#include "powertrain.hpp"
#include "simulation.hpp"
#include "vehicle_dynamics.hpp"
#include "velocity_control.hpp"

namespace scooterbench {

// ---------------------------------------------------------------- helpers

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed of one sweep point, independent of the order in which points are run.
inline std::uint64_t point_seed(std::uint64_t master, double grade, Strategy strategy)
{
    auto g = static_cast<std::uint64_t>(std::llround(grade * 1e6) + (1LL << 40));
    return splitmix64(splitmix64(master) ^ splitmix64(g * 2 + (strategy == Strategy::VC ? 1 : 0)));
}

inline std::string num(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

/// Directory-safe label such as "g-0.020_OR".
inline std::string point_label(double grade, Strategy s)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "g%+.3f_%s", grade, to_string(s));
    return buf;
}

// ---------------------------------------------------------------- coast-down

struct CoastdownResult {
    PathTimeSeries run_a; // uphill direction
    PathTimeSeries run_b; // downhill direction
    // Both absent when the measured start speeds disagree by more than the averaging tolerance.
    std::optional<PathTimeSeries> averaged;
    std::optional<FitReport> averaged_fit; // central differences on the averaged series
    std::string averaged_note;
    FitReport fit;          // per-run integral fits, coefficients averaged
    AeroRolling derived{};
};

inline CoastdownResult run_coastdown(const HarnessConfig& cfg)
{
    const auto& cd = cfg.coastdown;
    CoastdownResult r;
    std::mt19937_64 rng(cd.seed);
    r.run_a = add_velocity_noise(simulate_coast_down(cfg.vehicle, cfg.road_load, cd.v0, cd.grade, cd.dt), cd.noise, rng);
    r.run_b = add_velocity_noise(simulate_coast_down(cfg.vehicle, cfg.road_load, cd.v0, -cd.grade, cd.dt), cd.noise, rng);
    try {
        r.averaged = average_opposite_runs(r.run_a, r.run_b);
        r.averaged_fit = fit_resistance_curve_report(*r.averaged, cfg.vehicle);
    } catch (const std::exception& e) {
        r.averaged.reset();
        r.averaged_fit.reset();
        r.averaged_note = e.what();
    }
    r.fit = fit_opposite_runs(r.run_a, r.run_b, cfg.vehicle);
    r.derived = derive_aero_rolling(r.fit.curve, cfg.vehicle);
    return r;
}

// ---------------------------------------------------------------- sweep

struct EnginePoint {
    double grade = 0.0;
    Strategy strategy = Strategy::OR;
    double velocity = 0.0;          // km/h
    double throttle = 0.0;          // %
    double injector_duty = 0.0;     // %
    double fuel_flow = 0.0;         // kg/h
    double engine_speed = 0.0;      // rpm
    double ignition_offset = 0.0;   // deg
    double imep = 0.0;              // bar, of the ensemble mean
    double max_avg_pressure = 0.0;  // bar
    double peak_angle = 0.0;        // deg
    double indicated_power = 0.0;   // W
    double cylinder_temp = 0.0;     // degC
    double exhaust_temp = 0.0;      // degC
};

struct PointFlag {
    double grade;
    Strategy strategy;
    std::string flag;
    std::string detail;
};

struct SweepPoint {
    double grade = 0.0;
    Strategy strategy = Strategy::OR;
    std::uint64_t seed = 0;
    bool settled = false;
    double settled_at = 0.0; // s
    EfmReading efm;
    EmissionRecord record;
    EnginePoint engine;
    std::optional<LogBundle> bundle;
    double carbon_residual = 0.0; // relative, through the catalyst
};

struct ImprovementRow {
    double grade;
    std::string quantity;
    double or_value;
    double vc_value;
    ImprovementFactor factor;
};

struct SweepReport {
    std::vector<SweepPoint> points;
    std::vector<PointFlag> flags;
    std::vector<ImprovementRow> improvements;
    double neutral_band = 0.03;

    bool flagged(double grade, Strategy s) const
    {
        for (const auto& f : flags)
            if (f.grade == grade && f.strategy == s)
                return true;
        return false;
    }

    const SweepPoint* find(double grade, Strategy s) const
    {
        for (const auto& p : points)
            if (p.grade == grade && p.strategy == s)
                return &p;
        return nullptr;
    }
};

/// Per-grade factors for every grade where both strategies are present and unflagged.
inline std::vector<ImprovementRow> improvement_table(const std::vector<EmissionRecord>& records,
                                                     const std::vector<PointFlag>& flags, double neutral_band)
{
    auto flagged = [&](double g, Strategy s) {
        return std::any_of(flags.begin(), flags.end(), [&](const PointFlag& f) { return f.grade == g && f.strategy == s; });
    };
    std::vector<ImprovementRow> rows;
    std::vector<double> grades;
    for (const auto& r : records)
        if (std::find(grades.begin(), grades.end(), r.grade) == grades.end())
            grades.push_back(r.grade);
    std::sort(grades.begin(), grades.end());
    for (double g : grades) {
        const EmissionRecord* o = nullptr;
        const EmissionRecord* v = nullptr;
        for (const auto& r : records) {
            if (r.grade != g)
                continue;
            (r.strategy == Strategy::OR ? o : v) = &r;
        }
        if (!o || !v || flagged(g, Strategy::OR) || flagged(g, Strategy::VC))
            continue;
        auto f = improvement_factors(*o, *v, neutral_band);
        const std::pair<const char*, std::pair<double, double>> quantities[] = {
            {"mass_flow", {o->mass_flow, v->mass_flow}},
            {"CO", {o->composition.co_ppm, v->composition.co_ppm}},
            {"CO2", {o->composition.co2_pct, v->composition.co2_pct}},
            {"NOx", {o->composition.nox_ppm, v->composition.nox_ppm}},
            {"HC", {o->composition.hc_ppm, v->composition.hc_ppm}},
        };
        for (const auto& [name, vals] : quantities)
            rows.push_back({g, name, vals.first, vals.second, f.at(name)});
    }
    return rows;
}

namespace harness_detail {

struct Accumulator {
    double sum = 0.0;
    int n = 0;
    void add(double v)
    {
        sum += v;
        ++n;
    }
    double mean() const { return n ? sum / n : 0.0; }
};

inline GasComposition tailpipe(const EngineState& s, const EmissionsCalibration& c)
{
    double lambda = std::clamp(s.lambda, 0.9, 1.1);
    double temp = std::clamp(s.combustion_temp, 1500.0, 3000.0);
    return catalyst_convert(engine_out_concentrations(lambda, temp, c), lambda, c);
}

inline double carbon_residual(const EngineState& s, const EmissionsCalibration& c)
{
    double lambda = std::clamp(s.lambda, 0.9, 1.1);
    double temp = std::clamp(s.combustion_temp, 1500.0, 3000.0);
    GasComposition raw = engine_out_concentrations(lambda, temp, c);
    GasComposition out = catalyst_convert(raw, lambda, c);
    double in_c = raw.carbon_ppm(c.hc_carbon_number);
    return in_c > 0.0 ? std::abs(out.carbon_ppm(c.hc_carbon_number) - in_c) / in_c : 0.0;
}

} // namespace harness_detail

/// Starting state shared by every sweep point: setpoint speed with the throttle at mid travel.
inline ClosedLoop make_sweep_loop(const EngineModel& engine, const HarnessConfig& cfg, double grade, Strategy strategy)
{
    PiController pi = cfg.controller.pi;
    pi.setpoint = cfg.sweep.v_limit;
    pi.integrator = 50.0;
    TbwActuator act = cfg.controller.actuator;
    act.position = 50.0;
    LoadModel load{cfg.vehicle, cfg.road_load, grade};
    return ClosedLoop(engine, load, strategy, cfg.sweep.v_limit, pi, act, cfg.sweep.v_limit,
                      cfg.controller.control_rate);
}

/// One static operating point: settle, log, ensemble, emissions.
inline SweepPoint run_sweep_point(const EngineModel& engine, const HarnessConfig& cfg, double grade, Strategy strategy)
{
    using harness_detail::Accumulator;
    const double rate = cfg.controller.control_rate;
    const auto& em = cfg.emissions;

    SweepPoint pt;
    pt.grade = grade;
    pt.strategy = strategy;
    pt.seed = point_seed(cfg.sweep.seed, grade, strategy);
    std::mt19937_64 rng(pt.seed);

    ClosedLoop loop = make_sweep_loop(engine, cfg, grade, strategy);
    const double band = strategy == Strategy::VC ? cfg.sweep.vc_settle_band : cfg.sweep.or_settle_band;
    std::vector<double> history;
    const auto max_steps = static_cast<long>(std::llround((cfg.sweep.settle_timeout - cfg.sweep.log_duration) * rate));
    for (long k = 0; k < max_steps; ++k) {
        history.push_back(loop.step().velocity);
        if (settle_detect(history, rate, cfg.sweep.settle_window, band) &&
            std::abs(history.back() - history[history.size() - static_cast<std::size_t>(
                                                               std::llround(cfg.sweep.settle_window * rate))]) <=
                cfg.sweep.settle_drift) {
            pt.settled = true;
            pt.settled_at = loop.snapshot().time;
            break;
        }
    }

    // log at the control rate; gas analysers sample at 10 Hz
    const auto can_n = static_cast<std::size_t>(std::llround(cfg.sweep.log_duration * rate));
    const std::size_t gas_every = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(rate / 10.0)));
    std::vector<Channel> can{{"set_velocity_kmh", rate, {}}, {"velocity_kmh", rate, {}},
                             {"throttle_set_pct", rate, {}}, {"throttle_pct", rate, {}},
                             {"injector_duty_pct", rate, {}}, {"engine_speed_rpm", rate, {}},
                             {"ignition_offset_deg", rate, {}}, {"lambda", rate, {}},
                             {"cylinder_temp_c", rate, {}}, {"exhaust_temp_c", rate, {}}};
    std::vector<Channel> gas{{"co_ppm", 10.0, {}}, {"co2_pct", 10.0, {}}, {"hc_ppm", 10.0, {}},
                             {"nox_ppm", 10.0, {}}, {"o2_pct", 10.0, {}}, {"massflow_kgh", 10.0, {}}};
    std::normal_distribution<double> analyser(0.0, em.analyzer_noise);
    std::normal_distribution<double> lambda_noise(0.0, cfg.daq.lambda_sensor_noise);
    Accumulator velocity, throttle, duty, fuel, rpm, offset, cyl, exh, efm_reading;
    std::vector<double> gas_sum(5, 0.0);
    int gas_n = 0;
    bool efm_out_of_range = false;

    const double t0 = loop.snapshot().time;
    for (std::size_t k = 0; k < can_n; ++k) {
        const PlantSnapshot& s = loop.step();
        const EngineState& e = s.engine.state;
        double volts = lambda_sensor_voltage(e.lambda, cfg.daq.lambda_table) + lambda_noise(rng);
        double act_reported = [&] {
            TbwActuator a = loop.actuator();
            a.position = s.throttle;
            return reported_position(a, rng);
        }();
        auto ticks = make_tick_stream(e.engine_speed, cfg.daq.speed_window, cfg.daq.tick_jitter, rng);
        const double values[] = {cfg.sweep.v_limit, s.velocity, s.throttle_command, act_reported, e.injector_duty,
                                 engine_speed_from_ticks(ticks, cfg.daq.speed_window), e.ignition_offset,
                                 lambda_lookup(volts, cfg.daq.lambda_table).lambda, e.cylinder_temp, e.exhaust_temp};
        for (std::size_t c = 0; c < can.size(); ++c)
            can[c].push(values[c], t0);
        velocity.add(s.velocity);
        throttle.add(s.throttle);
        duty.add(e.injector_duty);
        fuel.add(e.fuel_flow);
        rpm.add(e.engine_speed);
        offset.add(e.ignition_offset);
        cyl.add(e.cylinder_temp);
        exh.add(e.exhaust_temp);

        if (k % gas_every == 0) {
            GasComposition g = harness_detail::tailpipe(e, em);
            const double clean[] = {g.co_ppm, g.co2_pct, g.hc_ppm, g.nox_ppm, g.o2_pct};
            for (std::size_t c = 0; c < 5; ++c) {
                double v = std::max(0.0, clean[c] * (1.0 + analyser(rng)));
                gas[c].push(v, t0);
                gas_sum[c] += v;
            }
            ++gas_n;
            EfmReading r = efm_measure(cfg.efm, e.air_flow + e.fuel_flow, rng);
            efm_out_of_range = efm_out_of_range || r.out_of_range;
            gas[5].push(r.reading, t0);
            efm_reading.add(r.reading);
        }
    }
    const EngineState last = loop.snapshot().engine.state;

    // cycle-resolved pressure at the final state
    std::vector<PressureTrace> cycles;
    std::normal_distribution<double> heat(0.0, cfg.daq.heat_release_noise);
    for (int c = 0; c < cfg.daq.cycles; ++c)
        cycles.push_back(synthesize_pressure_trace(engine.calibration(), engine.geometry(), last,
                                                   std::max(0.0, 1.0 + heat(rng))));

    std::map<std::string, std::string> meta{{"grade", num(grade)},
                                            {"strategy", to_string(strategy)},
                                            {"seed", std::to_string(pt.seed)},
                                            {"settled_at_s", num(pt.settled_at)}};
    if (pt.settled)
        pt.bundle = log_operating_point(can, gas, cycles, cfg.sweep.log_duration, true, meta);
    const EnsembleResult ens = pt.bundle ? pt.bundle->pressure : ensemble_average(cycles, cycles.size());

    GasComposition mean_gas;
    if (gas_n > 0) {
        mean_gas.co_ppm = gas_sum[0] / gas_n;
        mean_gas.co2_pct = gas_sum[1] / gas_n;
        mean_gas.hc_ppm = gas_sum[2] / gas_n;
        mean_gas.nox_ppm = gas_sum[3] / gas_n;
        mean_gas.o2_pct = gas_sum[4] / gas_n;
    }
    pt.efm.reading = efm_reading.mean();
    pt.efm.valid = pt.efm.reading >= cfg.efm.plausibility_floor;
    pt.efm.out_of_range = efm_out_of_range;
    double gas_temp = sample_gas_temperature(exh.mean(), em);
    pt.record = make_emission_record(grade, strategy, pt.efm.reading / 3.6, gas_temp, mean_gas, velocity.mean(), em);
    pt.carbon_residual = harness_detail::carbon_residual(last, em);

    EnginePoint& ep = pt.engine;
    ep.grade = grade;
    ep.strategy = strategy;
    ep.velocity = velocity.mean();
    ep.throttle = throttle.mean();
    ep.injector_duty = duty.mean();
    ep.fuel_flow = fuel.mean();
    ep.engine_speed = rpm.mean();
    ep.ignition_offset = offset.mean();
    ep.imep = imep(ens.mean, engine.calibration(), engine.geometry());
    ep.max_avg_pressure = peak_pressure(ens.mean);
    ep.peak_angle = peak_pressure_angle(ens.mean);
    ep.indicated_power = indicated_power(std::max(0.0, ep.imep), ep.engine_speed, engine.calibration());
    ep.cylinder_temp = cyl.mean();
    ep.exhaust_temp = exh.mean();
    return pt;
}

inline SweepReport run_dyno_sweep(const HarnessConfig& cfg)
{
    cfg.validate();
    EngineModel engine(cfg.engine);
    SweepReport rep;
    rep.neutral_band = cfg.emissions.improvement_neutral_band;
    const auto strategies = HarnessConfig::parse_strategy_set(cfg.sweep.strategy);
    for (double g : cfg.sweep.grades) {
        for (Strategy s : strategies) {
            SweepPoint p = run_sweep_point(engine, cfg, g, s);
            if (!p.settled)
                rep.flags.push_back({g, s, "settle_timeout",
                                     "no settled state within " + num(cfg.sweep.settle_timeout) + " s"});
            if (!p.efm.valid)
                rep.flags.push_back({g, s, "efm_implausible",
                                     "mean reading " + num(p.efm.reading) + " kg/h below the " +
                                         num(cfg.efm.plausibility_floor) + " kg/h floor"});
            if (p.efm.out_of_range)
                rep.flags.push_back({g, s, "efm_out_of_range", "reading clamped to " + num(cfg.efm.range_max) + " kg/h"});
            rep.points.push_back(std::move(p));
        }
    }
    std::vector<EmissionRecord> records;
    for (const auto& p : rep.points)
        records.push_back(p.record);
    rep.improvements = improvement_table(records, rep.flags, rep.neutral_band);
    return rep;
}

// ---------------------------------------------------------------- road vs dyno

struct ThrottleParity {
    double speed;          // km/h
    double road_throttle;  // %
    double dyno_throttle;  // %
};

/// Steady cruise throttle on level ground against a given load curve.
inline double cruise_throttle(const EngineModel& engine, const HarnessConfig& cfg, const ResistanceCurve& curve,
                              double speed)
{
    PiController pi = cfg.controller.pi;
    pi.setpoint = speed;
    pi.integrator = 0.0;
    TbwActuator act = cfg.controller.actuator;
    act.position = 0.0;
    LoadModel load{cfg.vehicle, curve, 0.0};
    // a cruise setpoint below the restriction limit: the VC loop is the cruise controller
    ClosedLoop loop(engine, load, Strategy::VC, cfg.sweep.v_limit, pi, act, speed, cfg.controller.control_rate);
    const auto steps = static_cast<long>(std::llround(cfg.dyno.duration * cfg.controller.control_rate));
    const auto tail = static_cast<long>(std::llround(5.0 * cfg.controller.control_rate));
    double sum = 0.0;
    for (long k = 0; k < steps; ++k) {
        const auto& s = loop.step();
        if (k >= steps - tail)
            sum += s.throttle;
    }
    return sum / static_cast<double>(std::min(steps, tail));
}

/// Road uses the configured road load; the dynamometer is programmed with the coast-down fit.
inline std::vector<ThrottleParity> run_road_vs_dyno(const HarnessConfig& cfg)
{
    cfg.validate();
    EngineModel engine(cfg.engine);
    const ResistanceCurve dyno_curve = run_coastdown(cfg).fit.curve;
    std::vector<ThrottleParity> out;
    for (double v : cfg.dyno.speeds)
        out.push_back({v, cruise_throttle(engine, cfg, cfg.road_load, v), cruise_throttle(engine, cfg, dyno_curve, v)});
    return out;
}

// ---------------------------------------------------------------- files

namespace report_detail {

inline const char* kRecordHeader =
    "grade,strategy,massflow_gps,exh_temp_K,co_ppm,co2_pct,hc_ppm,nox_ppm,o2_pct,v_kmh,co_mgkm,co2_gkm,hc_mgkm,"
    "nox_mgkm,volflow_m3h";

inline std::vector<std::string> split_csv(const std::string& line)
{
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(line);
    while (std::getline(is, cur, ','))
        out.push_back(cur);
    if (!line.empty() && line.back() == ',')
        out.emplace_back();
    return out;
}

inline double parse_num(const std::string& s, const std::string& where)
{
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos == s.size())
            return v;
    } catch (const std::exception&) {
    }
    throw ValidationError(where + ": '" + s + "' is not a number");
}

inline std::string read_file(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    if (!in)
        throw SimulationError("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace report_detail

inline void write_records_csv(std::ostream& os, const std::vector<EmissionRecord>& records)
{
    os << report_detail::kRecordHeader << '\n';
    for (const auto& r : records) {
        const auto& c = r.composition;
        os << num(r.grade) << ',' << to_string(r.strategy) << ',' << num(r.mass_flow) << ',' << num(r.exhaust_temp)
           << ',' << num(c.co_ppm) << ',' << num(c.co2_pct) << ',' << num(c.hc_ppm) << ',' << num(c.nox_ppm) << ','
           << num(c.o2_pct) << ',' << num(r.v) << ',' << num(r.per_km.at("CO")) << ','
           << num(r.per_km.at("CO2") / 1000.0) << ',' << num(r.per_km.at("HC")) << ',' << num(r.per_km.at("NOx"))
           << ',' << num(r.volume_flow) << '\n';
    }
}

/// Reads records back; per-km values are recomputed from the measured columns.
inline std::vector<EmissionRecord> read_records_csv(std::istream& is, const EmissionsCalibration& c)
{
    std::string line;
    if (!std::getline(is, line) || line != report_detail::kRecordHeader)
        throw ValidationError("sweep_records.csv: unexpected header");
    std::vector<EmissionRecord> out;
    int row = 1;
    while (std::getline(is, line)) {
        ++row;
        if (line.empty())
            continue;
        auto f = report_detail::split_csv(line);
        std::string where = "sweep_records.csv row " + std::to_string(row);
        if (f.size() != 15)
            throw ValidationError(where + ": expected 15 columns");
        auto d = [&](std::size_t i) { return report_detail::parse_num(f[i], where); };
        GasComposition g{d(4), d(5), d(6), d(7), d(8)};
        out.push_back(make_emission_record(d(0), parse_strategy(f[1]), d(2), d(3), g, d(9), c));
    }
    return out;
}

inline void write_flags_csv(std::ostream& os, const std::vector<PointFlag>& flags)
{
    os << "grade,strategy,flag,detail\n";
    for (const auto& f : flags)
        os << num(f.grade) << ',' << to_string(f.strategy) << ',' << f.flag << ',' << f.detail << '\n';
}

inline std::vector<PointFlag> read_flags_csv(std::istream& is)
{
    std::string line;
    if (!std::getline(is, line) || line != "grade,strategy,flag,detail")
        throw ValidationError("flags.csv: unexpected header");
    std::vector<PointFlag> out;
    while (std::getline(is, line)) {
        if (line.empty())
            continue;
        auto f = report_detail::split_csv(line);
        if (f.size() < 3)
            throw ValidationError("flags.csv: short row '" + line + "'");
        std::string detail;
        for (std::size_t i = 3; i < f.size(); ++i)
            detail += (i > 3 ? "," : "") + f[i];
        out.push_back({report_detail::parse_num(f[0], "flags.csv"), parse_strategy(f[1]), f[2], detail});
    }
    return out;
}

inline std::string improvement_text(const ImprovementFactor& f)
{
    if (f.infinite)
        return f.value > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", f.value);
    return buf;
}

/// Improvement table layout: quantity, OR, VC, factor (negative = degradation).
inline void write_improvements_csv(std::ostream& os, const std::vector<ImprovementRow>& rows)
{
    os << "grade,quantity,or_value,vc_value,improvement,factor_exact\n";
    for (const auto& r : rows)
        os << num(r.grade) << ',' << r.quantity << ',' << num(r.or_value) << ',' << num(r.vc_value) << ','
           << improvement_text(r.factor) << ',' << (r.factor.infinite ? improvement_text(r.factor) : num(r.factor.value))
           << '\n';
}

/// Distance-specific emissions with Euro 5 verdicts for every unflagged record.
inline void write_per_km_csv(std::ostream& os, const std::vector<EmissionRecord>& records,
                             const std::vector<PointFlag>& flags, const EmissionsCalibration& c)
{
    os << "grade,strategy,v_kmh,gas_temp_K,volflow_m3h,vd_m3km,co_mgkm,co2_gkm,hc_mgkm,nox_mgkm,co_verdict,hc_verdict,"
          "nox_verdict\n";
    for (const auto& r : records) {
        bool bad = std::any_of(flags.begin(), flags.end(),
                               [&](const PointFlag& f) { return f.grade == r.grade && f.strategy == r.strategy; });
        if (bad)
            continue;
        auto v = euro5_check(r.per_km, c);
        os << num(r.grade) << ',' << to_string(r.strategy) << ',' << num(r.v) << ',' << num(r.exhaust_temp) << ','
           << num(r.volume_flow) << ',' << num(per_km_volume(r.volume_flow, r.v)) << ',' << num(r.per_km.at("CO"))
           << ',' << num(r.per_km.at("CO2") / 1000.0) << ',' << num(r.per_km.at("HC")) << ','
           << num(r.per_km.at("NOx")) << ',' << to_string(v.at("CO")) << ',' << to_string(v.at("HC")) << ','
           << to_string(v.at("NOx")) << '\n';
    }
}

inline void write_engine_points_csv(std::ostream& os, const std::vector<SweepPoint>& points)
{
    os << "grade,strategy,v_kmh,throttle_pct,injector_duty_pct,fuel_kgh,engine_speed_rpm,ignition_offset_deg,imep_bar,"
          "max_avg_pressure_bar,peak_angle_deg,indicated_power_W,cylinder_temp_C,exhaust_temp_C,settled,settled_at_s,"
          "carbon_residual\n";
    for (const auto& p : points) {
        const auto& e = p.engine;
        os << num(e.grade) << ',' << to_string(e.strategy) << ',' << num(e.velocity) << ',' << num(e.throttle) << ','
           << num(e.injector_duty) << ',' << num(e.fuel_flow) << ',' << num(e.engine_speed) << ','
           << num(e.ignition_offset) << ',' << num(e.imep) << ',' << num(e.max_avg_pressure) << ','
           << num(e.peak_angle) << ',' << num(e.indicated_power) << ',' << num(e.cylinder_temp) << ','
           << num(e.exhaust_temp) << ',' << (p.settled ? 1 : 0) << ',' << num(p.settled_at) << ','
           << num(p.carbon_residual) << '\n';
    }
}

using FileSet = std::map<std::filesystem::path, std::string>; // relative path -> contents

/// Writes every file into a staging directory, then moves them into `out`; nothing lands on failure.
inline void commit_files(const std::filesystem::path& out, const FileSet& files)
{
    namespace fs = std::filesystem;
    if (files.empty())
        throw SimulationError("refusing to write an empty report to " + out.string());
    fs::path staging = out;
    staging += ".staging";
    std::error_code ec;
    fs::remove_all(staging, ec);
    try {
        for (const auto& [rel, text] : files) {
            fs::path p = staging / rel;
            fs::create_directories(p.parent_path());
            std::ofstream f(p, std::ios::binary);
            if (!f)
                throw SimulationError("cannot write " + p.string());
            f << text;
            if (!f)
                throw SimulationError("write failed for " + p.string());
        }
        fs::create_directories(out);
        for (const auto& [rel, text] : files) {
            fs::path dst = out / rel;
            fs::create_directories(dst.parent_path());
            fs::rename(staging / rel, dst);
        }
    } catch (const fs::filesystem_error& e) {
        fs::remove_all(staging, ec);
        throw SimulationError(std::string("report I/O failed: ") + e.what());
    } catch (...) {
        fs::remove_all(staging, ec);
        throw;
    }
    fs::remove_all(staging, ec);
}

template <class Fn>
std::string render(Fn&& fn)
{
    std::ostringstream os;
    fn(os);
    return os.str();
}

/// Tables derived from the record and flag files; shared by emit_report and the report command.
inline void add_derived_tables(FileSet& files, const EmissionsCalibration& c, double neutral_band)
{
    std::istringstream rec_in(files.at("sweep_records.csv"));
    std::istringstream flag_in(files.at("flags.csv"));
    auto records = read_records_csv(rec_in, c);
    auto flags = read_flags_csv(flag_in);
    auto rows = improvement_table(records, flags, neutral_band);
    files["improvements.csv"] = render([&](std::ostream& os) { write_improvements_csv(os, rows); });
    files["per_km.csv"] = render([&](std::ostream& os) { write_per_km_csv(os, records, flags, c); });
}

inline FileSet report_files(const SweepReport& rep, const EmissionsCalibration& c)
{
    if (rep.points.empty())
        throw SimulationError("emit_report: report has no operating points");
    FileSet files;
    std::vector<EmissionRecord> records;
    for (const auto& p : rep.points)
        records.push_back(p.record);
    files["sweep_records.csv"] = render([&](std::ostream& os) { write_records_csv(os, records); });
    files["flags.csv"] = render([&](std::ostream& os) { write_flags_csv(os, rep.flags); });
    files["engine_points.csv"] = render([&](std::ostream& os) { write_engine_points_csv(os, rep.points); });
    add_derived_tables(files, c, rep.neutral_band);

    for (const auto& p : rep.points) {
        if (!p.bundle)
            continue;
        std::filesystem::path dir = std::filesystem::path("channels") / point_label(p.grade, p.strategy);
        const LogBundle& b = *p.bundle;
        files[dir / "can_20hz.csv"] = render([&](std::ostream& os) { write_channels_csv(os, b.can); });
        files[dir / "emissions_1hz.csv"] = render([&](std::ostream& os) { write_channels_csv(os, b.emissions); });
        files[dir / "pressure_mean.csv"] = render([&](std::ostream& os) { write_csv(os, b.pressure.mean); });
        files[dir / "pressure_std.csv"] =
            render([&](std::ostream& os) { write_csv(os, b.pressure.stddev, "pressure_std_bar"); });
        files[dir / "meta.txt"] = render([&](std::ostream& os) {
            for (const auto& [k, v] : b.meta)
                os << k << '=' << v << '\n';
        });
    }
    return files;
}

inline void emit_report(const SweepReport& rep, const EmissionsCalibration& c, const std::filesystem::path& out)
{
    commit_files(out, report_files(rep, c));
}

/// Rebuilds improvements.csv and per_km.csv from a sweep directory.
inline void regenerate_report(const std::filesystem::path& in, const std::filesystem::path& out,
                              const EmissionsCalibration& c)
{
    FileSet files;
    files["sweep_records.csv"] = report_detail::read_file(in / "sweep_records.csv");
    files["flags.csv"] = report_detail::read_file(in / "flags.csv");
    add_derived_tables(files, c, c.improvement_neutral_band);
    FileSet derived{{"improvements.csv", files.at("improvements.csv")}, {"per_km.csv", files.at("per_km.csv")}};
    commit_files(out, derived);
}

inline FileSet coastdown_files(const CoastdownResult& r, const HarnessConfig& cfg)
{
    FileSet files;
    files["coastdown_report.csv"] = render([&](std::ostream& os) {
        os << "method,quad_coeff,const_coeff,drag_coeff,rolling_coeff,points,rms_residual_N,quad_clamped,const_clamped\n";
        auto row = [&](const char* name, const FitReport& f) {
            AeroRolling ar = derive_aero_rolling(f.curve, cfg.vehicle);
            os << name << ',' << num(f.curve.quad_coeff) << ',' << num(f.curve.const_coeff) << ','
               << num(ar.drag_coeff) << ',' << num(ar.rolling_coeff) << ',' << f.points_used << ','
               << num(f.rms_residual) << ',' << (f.quad_clamped ? 1 : 0) << ',' << (f.const_clamped ? 1 : 0) << '\n';
        };
        row("per_run_integral", r.fit);
        if (r.averaged_fit)
            row("averaged_central_difference", *r.averaged_fit);
        AeroRolling stated{cfg.vehicle.drag_coeff, cfg.vehicle.rolling_coeff};
        ResistanceCurve implied = curve_from_aero_rolling(stated, cfg.vehicle);
        os << "stated_coefficients," << num(implied.quad_coeff) << ',' << num(implied.const_coeff) << ','
           << num(stated.drag_coeff) << ',' << num(stated.rolling_coeff) << ",0,0,0,0\n";
    });
    files["coastdown_run_a.csv"] = render([&](std::ostream& os) { write_csv(os, r.run_a); });
    files["coastdown_run_b.csv"] = render([&](std::ostream& os) { write_csv(os, r.run_b); });
    if (r.averaged)
        files["coastdown_series.csv"] = render([&](std::ostream& os) { write_csv(os, *r.averaged); });
    else
        files["coastdown_series.txt"] = r.averaged_note + "\n";
    return files;
}

inline FileSet road_vs_dyno_files(const std::vector<ThrottleParity>& rows)
{
    FileSet files;
    files["road_vs_dyno.csv"] = render([&](std::ostream& os) {
        os << "speed_kmh,road_throttle_pct,dyno_throttle_pct,difference_pct\n";
        for (const auto& r : rows)
            os << num(r.speed) << ',' << num(r.road_throttle) << ',' << num(r.dyno_throttle) << ','
               << num(r.dyno_throttle - r.road_throttle) << '\n';
    });
    return files;
}

} // namespace scooterbench

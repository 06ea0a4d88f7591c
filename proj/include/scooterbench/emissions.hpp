#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>

#include "errors.hpp"
#include "powertrain.hpp"

namespace scooterbench {

inline constexpr double kUniversalGasConstant = 8.314462618; // J/(mol K)

struct GasComposition {
    double co_ppm = 0.0;
    double co2_pct = 0.0;
    double hc_ppm = 0.0;
    double nox_ppm = 0.0;
    double o2_pct = 0.0;

    /// Carbon atoms as ppm of CO2-equivalent.
    double carbon_ppm(double hc_carbon_number) const
    {
        return co2_pct * 1e4 + co_ppm + hc_carbon_number * hc_ppm;
    }

    bool valid() const
    {
        if (co_ppm < 0 || co2_pct < 0 || hc_ppm < 0 || nox_ppm < 0 || o2_pct < 0)
            return false;
        if (co2_pct > 20.0)
            return false;
        return co_ppm + hc_ppm + nox_ppm <= 20000.0;
    }
};

struct EmissionsCalibration {
    // engine-out model
    double reference_temp = 2000.0;  // K
    double co_ref_ppm = 30584.7;
    double co_temp_scale = 461.74;   // K
    double co_lambda_width = 0.02;
    double hc_ref_ppm = 117.06;
    double hc_temp_scale = 3258.0;
    double hc_lambda_width = 0.02;
    double nox_ref_ppm = 11669.7;
    double nox_activation_temp = 6602.1; // K
    double nox_lambda_peak = 1.05;
    double nox_lambda_width = 0.1;
    double o2_floor_pct = 1.0;
    double o2_lean_slope = 19.0;     // % per unit lambda when lean
    double o2_softness = 0.005;
    double co2_stoich_pct = 12.45355; // carbon as CO2 % at lambda 1
    double hc_carbon_number = 3.0;

    // catalyst efficiency curves (logistic in lambda)
    double cat_co_min = 0.61, cat_co_max = 0.99, cat_co_mid = 0.9895, cat_co_width = 0.0043;
    double cat_hc_min = 0.80, cat_hc_max = 0.97, cat_hc_mid = 0.985, cat_hc_width = 0.01;
    double cat_nox_max = 0.98, cat_nox_mid = 1.003, cat_nox_width = 0.0015;

    // gas equation and mass conversion
    double exhaust_molar_mass = 0.02838; // kg/mol
    double ambient_pressure = 101325.0; // Pa
    double ambient_temp = 293.15;       // K
    double sample_cooling = 0.231;      // share of the exhaust temperature rise left at the flow meter
    double molar_mass_co = 0.028;
    double molar_mass_co2 = 0.044;
    double molar_mass_hc = 0.044;
    double molar_mass_nox = 0.046;

    // Euro 5 limits, mg/km
    double limit_co = 1000.0;
    double limit_hc = 100.0;
    double limit_nox = 60.0;

    double improvement_neutral_band = 0.03;
    double analyzer_noise = 0.005; // relative 1-sigma noise of each gas channel

    void validate() const
    {
        if (!(co_temp_scale > 0) || !(hc_temp_scale > 0) || !(co_lambda_width > 0) || !(hc_lambda_width > 0) ||
            !(nox_lambda_width > 0) || !(o2_softness > 0))
            throw ConfigError("emission model widths and scales must be positive");
        if (!(exhaust_molar_mass > 0) || !(ambient_pressure > 0) || !(ambient_temp > 0))
            throw ConfigError("gas-equation constants must be positive");
        for (double e : {cat_co_min, cat_co_max, cat_hc_min, cat_hc_max, cat_nox_max})
            if (e < 0.0 || e > 1.0)
                throw ConfigError("catalyst efficiencies must lie within 0..1");
        if (improvement_neutral_band < 0.0 || analyzer_noise < 0.0)
            throw ConfigError("improvement band and analyzer noise must be non-negative");
    }

    bool operator==(const EmissionsCalibration&) const = default;
};

struct EfmModel {
    double range_min = 12.5;          // kg/h
    double range_max = 900.0;         // kg/h
    double plausibility_floor = 7.9;  // kg/h
    double noise_rms = 0.25;          // kg/h

    void validate() const
    {
        if (!(plausibility_floor < range_min && range_min < range_max))
            throw ConfigError("EFM requires plausibility_floor < range_min < range_max");
        if (noise_rms < 0.0)
            throw ConfigError("EFM noise_rms must be non-negative");
    }

    bool operator==(const EfmModel&) const = default;
};

struct EfmReading {
    double reading = 0.0; // kg/h
    bool valid = false;
    bool out_of_range = false;
};

/// Exhaust mass flow from fuel consumption, kg/h.
inline double exhaust_mass_flow_from_fuel(double fuel_con_lph, double fuel_density, double lambda)
{
    if (fuel_con_lph < 0 || fuel_density < 0 || lambda < 0)
        throw DomainError("exhaust_mass_flow_from_fuel: negative input");
    return fuel_con_lph * fuel_density * (1.0 + 14.7 * lambda);
}

inline double exhaust_mass_flow_components(double air_flow, double fuel_flow)
{
    if (air_flow < 0 || fuel_flow < 0)
        throw DomainError("exhaust_mass_flow_components: negative input");
    return air_flow + fuel_flow;
}

template <class Rng>
EfmReading efm_measure(const EfmModel& model, double true_flow, Rng& rng)
{
    if (true_flow < 0)
        throw DomainError("efm_measure: negative flow");
    EfmReading r;
    r.reading = true_flow;
    if (model.noise_rms > 0.0) {
        std::normal_distribution<double> n(0.0, model.noise_rms);
        r.reading += n(rng);
    }
    if (r.reading > model.range_max) {
        r.reading = model.range_max;
        r.out_of_range = true;
    }
    r.reading = std::max(0.0, r.reading);
    r.valid = r.reading >= model.plausibility_floor;
    return r;
}

inline EfmReading efm_measure(const EfmModel& model, double true_flow, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    return efm_measure(model, true_flow, rng);
}

namespace detail {
inline double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }
inline double softplus(double z) { return z > 30.0 ? z : std::log1p(std::exp(z)); }
} // namespace detail

/// Raw (pre-catalyst) exhaust composition.
inline GasComposition engine_out_concentrations(double lambda, double combustion_temp, const EmissionsCalibration& c)
{
    if (lambda < 0.9 || lambda > 1.1)
        throw DomainError("engine_out_concentrations: lambda outside 0.9..1.1");
    if (combustion_temp < 1500.0 || combustion_temp > 3000.0)
        throw DomainError("engine_out_concentrations: combustion temperature outside 1500..3000 K");
    const double dt = combustion_temp - c.reference_temp;
    GasComposition g;
    g.co_ppm = c.co_ref_ppm * std::exp(-dt / c.co_temp_scale) * detail::logistic((1.0 - lambda) / c.co_lambda_width);
    g.hc_ppm = c.hc_ref_ppm * std::exp(-dt / c.hc_temp_scale) * detail::logistic((1.0 - lambda) / c.hc_lambda_width);
    double dl = (lambda - c.nox_lambda_peak) / c.nox_lambda_width;
    g.nox_ppm = c.nox_ref_ppm * std::exp(-c.nox_activation_temp / combustion_temp) * std::exp(-dl * dl);
    g.o2_pct = c.o2_floor_pct + c.o2_lean_slope * c.o2_softness * detail::softplus((lambda - 1.0) / c.o2_softness);
    double carbon_pct = c.co2_stoich_pct / lambda;
    g.co2_pct = std::max(0.0, carbon_pct - (g.co_ppm + c.hc_carbon_number * g.hc_ppm) * 1e-4);
    return g;
}

struct CatalystEfficiency {
    double co;
    double hc;
    double nox;
};

inline CatalystEfficiency catalyst_efficiencies(double lambda, const EmissionsCalibration& c)
{
    CatalystEfficiency e{};
    e.co = c.cat_co_min + (c.cat_co_max - c.cat_co_min) * detail::logistic((lambda - c.cat_co_mid) / c.cat_co_width);
    e.hc = c.cat_hc_min + (c.cat_hc_max - c.cat_hc_min) * detail::logistic((lambda - c.cat_hc_mid) / c.cat_hc_width);
    e.nox = c.cat_nox_max * detail::logistic((c.cat_nox_mid - lambda) / c.cat_nox_width);
    return e;
}

/**
 * Applies conversion efficiencies.  Oxidised CO and HC carbon moves to CO2.
 * Oxygen is drawn for the oxidation as far as available (the rest is
 * attributed to water-gas shift under rich conditions) and returned by NOx
 * reduction.
 */
inline GasComposition catalyst_convert(const GasComposition& raw, const CatalystEfficiency& eff,
                                       const EmissionsCalibration& c)
{
    GasComposition out = raw;
    double d_co = raw.co_ppm * eff.co;
    double d_hc = raw.hc_ppm * eff.hc;
    double d_nox = raw.nox_ppm * eff.nox;
    out.co_ppm = raw.co_ppm - d_co;
    out.hc_ppm = raw.hc_ppm - d_hc;
    out.nox_ppm = raw.nox_ppm - d_nox;
    out.co2_pct = raw.co2_pct + (d_co + c.hc_carbon_number * d_hc) * 1e-4;
    double o2_needed = 0.5 * d_co + (c.hc_carbon_number + 0.25 * (2.0 * c.hc_carbon_number + 2.0)) * d_hc;
    double o2_released = 0.5 * d_nox;
    out.o2_pct = std::max(0.0, raw.o2_pct - (o2_needed - o2_released) * 1e-4);
    return out;
}

inline GasComposition catalyst_convert(const GasComposition& raw, double lambda, const EmissionsCalibration& c)
{
    if (lambda < 0.9 || lambda > 1.1)
        throw DomainError("catalyst_convert: lambda outside 0.9..1.1");
    return catalyst_convert(raw, catalyst_efficiencies(lambda, c), c);
}

/// Ideal-gas volume flow in m^3/h from a mass flow in g/s.
inline double exhaust_volume_flow(double mass_flow_gps, double temp_k, double pressure_pa, double molar_mass)
{
    if (!(temp_k > 0.0) || !(pressure_pa > 0.0) || !(molar_mass > 0.0))
        throw DomainError("exhaust_volume_flow: temperature, pressure and molar mass must be positive");
    double mol_per_s = mass_flow_gps * 1e-3 / molar_mass;
    return mol_per_s * kUniversalGasConstant * temp_k / pressure_pa * 3600.0;
}

/// Temperature at the flow meter after the exhaust has cooled towards ambient.
inline double sample_gas_temperature(double exhaust_temp_c, const EmissionsCalibration& c)
{
    double t = exhaust_temp_c + 273.15;
    return c.ambient_temp + c.sample_cooling * (t - c.ambient_temp);
}

inline double per_km_volume(double volume_flow_m3h, double v_kmh)
{
    if (!(v_kmh > 0.0))
        throw DomainError("per_km_volume: velocity must be positive");
    return volume_flow_m3h / v_kmh;
}

inline double ppm_to_mg_per_km(double conc_ppm, double vd_m3_per_km, double temp_k, double pressure_pa,
                               double molar_mass)
{
    if (!(temp_k > 0.0))
        throw DomainError("ppm_to_mg_per_km: temperature must be positive");
    double mol_per_km = conc_ppm * 1e-6 * vd_m3_per_km * pressure_pa / (kUniversalGasConstant * temp_k);
    return mol_per_km * molar_mass * 1e6;
}

using PerKm = std::map<std::string, double>; // "CO", "CO2", "HC", "NOx" -> mg/km

enum class Verdict { Pass, Fail, NotLimited };

inline const char* to_string(Verdict v)
{
    switch (v) {
    case Verdict::Pass: return "pass";
    case Verdict::Fail: return "fail";
    default: return "n/a";
    }
}

inline std::map<std::string, Verdict> euro5_check(const PerKm& per_km, const EmissionsCalibration& c = {})
{
    const std::map<std::string, double> limits{{"CO", c.limit_co}, {"HC", c.limit_hc}, {"NOx", c.limit_nox}};
    std::map<std::string, Verdict> out;
    for (const auto& [name, limit] : limits) {
        auto it = per_km.find(name);
        if (it == per_km.end())
            throw ValidationError("euro5_check: missing pollutant " + name);
        out[name] = it->second <= limit ? Verdict::Pass : Verdict::Fail;
    }
    if (per_km.count("CO2"))
        out["CO2"] = Verdict::NotLimited;
    return out;
}

struct EmissionRecord {
    double grade = 0.0;
    Strategy strategy = Strategy::OR;
    double mass_flow = 0.0;     // g/s
    double exhaust_temp = 0.0;  // K, at the flow meter
    GasComposition composition;
    double v = 0.0;             // km/h
    PerKm per_km;               // mg/km
    double volume_flow = 0.0;   // m^3/h
};

inline EmissionRecord make_emission_record(double grade, Strategy strategy, double mass_flow_gps, double gas_temp_k,
                                           const GasComposition& comp, double v_kmh, const EmissionsCalibration& c)
{
    EmissionRecord r;
    r.grade = grade;
    r.strategy = strategy;
    r.mass_flow = mass_flow_gps;
    r.exhaust_temp = gas_temp_k;
    r.composition = comp;
    r.v = v_kmh;
    r.volume_flow = exhaust_volume_flow(mass_flow_gps, gas_temp_k, c.ambient_pressure, c.exhaust_molar_mass);
    double vd = per_km_volume(r.volume_flow, v_kmh);
    auto mg = [&](double ppm, double m) { return ppm_to_mg_per_km(ppm, vd, gas_temp_k, c.ambient_pressure, m); };
    r.per_km["CO"] = mg(comp.co_ppm, c.molar_mass_co);
    r.per_km["CO2"] = mg(comp.co2_pct * 1e4, c.molar_mass_co2);
    r.per_km["HC"] = mg(comp.hc_ppm, c.molar_mass_hc);
    r.per_km["NOx"] = mg(comp.nox_ppm, c.molar_mass_nox);
    return r;
}

struct ImprovementFactor {
    double value = 1.0;
    bool infinite = false;
};

/**
 * Ratio convention of the improvement table: OR/VC when VC is not
 * worse, -(VC/OR) otherwise.  Ratios within `neutral_band` of unity are
 * reported as plain OR/VC.
 */
inline ImprovementFactor improvement_factor(double or_value, double vc_value, double neutral_band = 0.0)
{
    ImprovementFactor f;
    if (or_value == vc_value)
        return f;
    if (vc_value == 0.0 || or_value == 0.0) {
        f.infinite = true;
        f.value = vc_value == 0.0 ? INFINITY : -INFINITY;
        return f;
    }
    double ratio = or_value / vc_value;
    if (std::abs(ratio - 1.0) <= neutral_band || vc_value <= or_value)
        f.value = ratio;
    else
        f.value = -(vc_value / or_value);
    return f;
}

inline std::map<std::string, ImprovementFactor> improvement_factors(const EmissionRecord& or_rec,
                                                                    const EmissionRecord& vc_rec,
                                                                    double neutral_band = 0.0)
{
    if (or_rec.grade != vc_rec.grade)
        throw ValidationError("improvement_factors: records belong to different grades");
    std::map<std::string, ImprovementFactor> f;
    f["mass_flow"] = improvement_factor(or_rec.mass_flow, vc_rec.mass_flow, neutral_band);
    f["CO"] = improvement_factor(or_rec.composition.co_ppm, vc_rec.composition.co_ppm, neutral_band);
    f["CO2"] = improvement_factor(or_rec.composition.co2_pct, vc_rec.composition.co2_pct, neutral_band);
    f["NOx"] = improvement_factor(or_rec.composition.nox_ppm, vc_rec.composition.nox_ppm, neutral_band);
    f["HC"] = improvement_factor(or_rec.composition.hc_ppm, vc_rec.composition.hc_ppm, neutral_band);
    return f;
}

} // namespace scooterbench

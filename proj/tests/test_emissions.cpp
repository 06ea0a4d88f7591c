#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "scooterbench/emissions.hpp"

using namespace scooterbench;

namespace {

const EmissionsCalibration kCal{};
constexpr double R = 8.314462618;
constexpr double P0 = 101325.0;

double rel(double got, double want) { return std::abs(got - want) / std::abs(want); }

// temperature at which 3.1 g/s of exhaust occupies 15.63 m^3/h
double oracle_gas_temperature() { return 15.63 / 3600.0 * P0 * 0.02838 / (3.1e-3 * R); }

// level-ground engine-out states of the two strategies with the shipped engine calibration
constexpr double kOrLambda = 0.99, kOrCombustion = 2029.75;
constexpr double kVcLambda = 0.997, kVcCombustion = 2450.0;

GasComposition tailpipe(double lambda, double temp)
{
    return catalyst_convert(engine_out_concentrations(lambda, temp, kCal), lambda, kCal);
}

} // namespace

TEST(ExhaustMassFlow, FuelBasedFormula)
{
    EXPECT_EQ(exhaust_mass_flow_from_fuel(0.0, 0.75, 1.0), 0.0);
    EXPECT_NEAR(exhaust_mass_flow_from_fuel(1.0, 0.75, 1.0), 11.775, 1e-12);
    EXPECT_NEAR(exhaust_mass_flow_from_fuel(1.0, 0.75, 1.007), 11.852, 5e-4);
    EXPECT_LT(rel(exhaust_mass_flow_from_fuel(1.0, 0.75, 1.0), 12.0), 0.025);
}

TEST(ExhaustMassFlow, ComponentsAgreeWithFuelFormulaAtStoichiometry)
{
    EXPECT_EQ(exhaust_mass_flow_components(0.0, 0.0), 0.0);
    for (double fuel : {0.3, 0.75, 1.1}) {
        double lph = fuel / 0.75;
        EXPECT_NEAR(exhaust_mass_flow_components(14.7 * fuel, fuel), exhaust_mass_flow_from_fuel(lph, 0.75, 1.0), 1e-9);
    }
    EXPECT_NEAR(exhaust_mass_flow_components(11.03, 0.75), 11.78, 1e-9);
    EXPECT_NEAR(3.1 * 3.6, 11.16, 1e-12);
    EXPECT_THROW(exhaust_mass_flow_components(-1.0, 0.0), DomainError);
}

TEST(Efm, NoiselessReadingIsIdentity)
{
    EfmModel m;
    m.noise_rms = 0.0;
    auto r = efm_measure(m, 11.16, 1);
    EXPECT_DOUBLE_EQ(r.reading, 11.16);
    EXPECT_TRUE(r.valid);
    EXPECT_FALSE(r.out_of_range);
}

TEST(Efm, PlausibilityFloorAndRangeClamp)
{
    EfmModel m;
    EXPECT_FALSE(efm_measure(m, 5.0, 2).valid);
    auto hi = efm_measure(m, 1000.0, 3);
    EXPECT_DOUBLE_EQ(hi.reading, 900.0);
    EXPECT_TRUE(hi.out_of_range);
    EXPECT_THROW(efm_measure(m, -1.0, 3), DomainError);
}

TEST(Efm, SeededNoiseIsReproducible)
{
    EfmModel m;
    EXPECT_EQ(efm_measure(m, 9.0, 42).reading, efm_measure(m, 9.0, 42).reading);
    EXPECT_NE(efm_measure(m, 9.0, 42).reading, efm_measure(m, 9.0, 43).reading);
}

TEST(Efm, RejectsInconsistentRanges)
{
    EfmModel m;
    m.plausibility_floor = 20.0;
    EXPECT_THROW(m.validate(), ConfigError);
}

TEST(EngineOut, PureAndInRange)
{
    auto a = engine_out_concentrations(0.99, 2100.0, kCal);
    auto b = engine_out_concentrations(0.99, 2100.0, kCal);
    EXPECT_EQ(a.co_ppm, b.co_ppm);
    EXPECT_EQ(a.nox_ppm, b.nox_ppm);
    EXPECT_THROW(engine_out_concentrations(0.85, 2100.0, kCal), DomainError);
    EXPECT_THROW(engine_out_concentrations(1.0, 1400.0, kCal), DomainError);
}

TEST(EngineOut, MonotoneOverGrid)
{
    for (double lam = 0.9; lam <= 1.1 + 1e-9; lam += 0.01) {
        for (double t = 1500.0; t < 3000.0; t += 50.0) {
            auto lo = engine_out_concentrations(lam, t, kCal);
            auto hi = engine_out_concentrations(lam, t + 50.0, kCal);
            ASSERT_LT(hi.co_ppm, lo.co_ppm) << lam << ' ' << t;
            ASSERT_LT(hi.hc_ppm, lo.hc_ppm) << lam << ' ' << t;
            ASSERT_GT(hi.nox_ppm, lo.nox_ppm) << lam << ' ' << t;
        }
    }
    for (double t : {1800.0, 2400.0}) {
        auto rich = engine_out_concentrations(0.97, t, kCal);
        auto lean = engine_out_concentrations(1.03, t, kCal);
        EXPECT_GT(rich.co_ppm, lean.co_ppm);
        EXPECT_GT(rich.hc_ppm, lean.hc_ppm);
        EXPECT_LT(rich.o2_pct, lean.o2_pct);
    }
}

TEST(EngineOut, NoxPeaksSlightlyLean)
{
    double best = 0.0, best_lambda = 0.0;
    for (double lam = 0.9; lam <= 1.1; lam += 0.001) {
        double n = engine_out_concentrations(lam, 2300.0, kCal).nox_ppm;
        if (n > best) {
            best = n;
            best_lambda = lam;
        }
    }
    EXPECT_GT(best_lambda, 1.0);
}

TEST(Catalyst, EfficienciesInOptimumWindow)
{
    auto e = catalyst_efficiencies(0.995, kCal);
    EXPECT_GE(e.co, 0.90);
    EXPECT_GE(e.hc, 0.90);
    EXPECT_GE(e.nox, 0.90);
    EXPECT_LT(catalyst_efficiencies(1.02, kCal).nox, e.nox);
}

TEST(Catalyst, PerfectConversionMovesAllCarbon)
{
    GasComposition raw{5000.0, 12.0, 100.0, 300.0, 1.5};
    auto out = catalyst_convert(raw, CatalystEfficiency{1.0, 1.0, 1.0}, kCal);
    EXPECT_EQ(out.co_ppm, 0.0);
    EXPECT_EQ(out.hc_ppm, 0.0);
    EXPECT_EQ(out.nox_ppm, 0.0);
    EXPECT_NEAR(out.co2_pct, 12.0 + (5000.0 + 3.0 * 100.0) * 1e-4, 1e-12);
}

TEST(Catalyst, ConservesCarbonEverywhere)
{
    for (double lam = 0.9; lam <= 1.1 + 1e-9; lam += 0.005) {
        for (double t = 1500.0; t <= 3000.0; t += 100.0) {
            auto raw = engine_out_concentrations(lam, t, kCal);
            auto out = catalyst_convert(raw, lam, kCal);
            double in_c = raw.carbon_ppm(3.0);
            ASSERT_LT(std::abs(out.carbon_ppm(3.0) - in_c) / in_c, 1e-6);
        }
    }
}

TEST(Catalyst, ReproducesLevelGroundTailpipeRows)
{
    auto orr = tailpipe(kOrLambda, kOrCombustion);
    auto vc = tailpipe(kVcLambda, kVcCombustion);
    EXPECT_LT(rel(orr.co_ppm, 3373.0), 0.01);
    EXPECT_LT(rel(vc.co_ppm, 412.7), 0.01);
    EXPECT_LT(rel(orr.nox_ppm, 6.35), 0.01);
    EXPECT_LT(rel(vc.nox_ppm, 22.4), 0.01);
    EXPECT_LT(rel(orr.co2_pct, 12.24), 0.01);
    EXPECT_LT(rel(orr.co_ppm / vc.co_ppm, 8.17), 0.01);
    EXPECT_LT(rel(orr.hc_ppm / vc.hc_ppm, 1.79), 0.01);
    EXPECT_TRUE(orr.valid());
    EXPECT_TRUE(vc.valid());
    EXPECT_GT(orr.o2_pct, 0.0);
}

TEST(VolumeFlow, IdealGas)
{
    EXPECT_EQ(exhaust_volume_flow(0.0, 493.0, P0, 0.02838), 0.0);
    EXPECT_NEAR(exhaust_volume_flow(3.1, 493.0, P0, 0.02838), 15.9, 0.05);
    double t = oracle_gas_temperature();
    EXPECT_NEAR(t, 484.4, 0.1);
    EXPECT_NEAR(exhaust_volume_flow(3.1, t, P0, 0.02838), 15.63, 1e-9);
    EXPECT_NEAR(exhaust_volume_flow(3.1, 2.0 * t, P0, 0.02838), 2.0 * 15.63, 1e-9);
    EXPECT_THROW(exhaust_volume_flow(3.1, 0.0, P0, 0.02838), DomainError);
}

TEST(VolumeFlow, SampleTemperatureOfLevelGroundExhaust)
{
    // 847.9 degC (OR) and 655.6 degC (VC) at the engine; the metering point sits near 484 / 440 K
    EXPECT_NEAR(sample_gas_temperature(847.9, kCal), 484.4, 0.1);
    EXPECT_NEAR(sample_gas_temperature(655.6, kCal), 440.0, 0.1);
}

TEST(PerKmVolume, BenchRows)
{
    EXPECT_NEAR(per_km_volume(15.63, 48.7), 0.321, 5e-4);
    EXPECT_NEAR(per_km_volume(12.09, 48.7), 0.248, 5e-4);
    EXPECT_EQ(per_km_volume(0.0, 48.7), 0.0);
    EXPECT_THROW(per_km_volume(10.0, 0.0), DomainError);
}

TEST(PpmToMgPerKm, CarbonDioxideRow)
{
    double t = oracle_gas_temperature();
    double vd = 15.63 / 48.7;
    double g_per_km = ppm_to_mg_per_km(122400.0, vd, t, P0, 0.044) / 1000.0;
    EXPECT_LT(rel(g_per_km, 43.1), 0.02);
    // hand evaluation of n = c * V * p / (R T), m = n * M
    EXPECT_NEAR(g_per_km, 0.1224 * vd * P0 / (R * t) * 0.044 * 1000.0, 1e-9);
}

TEST(PpmToMgPerKm, CarbonMonoxideFollowsFormulaNotBenchRow)
{
    double mg = ppm_to_mg_per_km(3373.0, 0.321, 489.0, P0, 0.028);
    EXPECT_NEAR(mg, 3373e-6 * 0.321 * P0 / (R * 489.0) * 0.028 * 1e6, 1e-9);
    EXPECT_NEAR(mg, 756.0, 2.0);
}

TEST(PpmToMgPerKm, LinearityAndErrors)
{
    double base = ppm_to_mg_per_km(100.0, 0.3, 480.0, P0, 0.046);
    EXPECT_EQ(ppm_to_mg_per_km(0.0, 0.3, 480.0, P0, 0.046), 0.0);
    EXPECT_NEAR(ppm_to_mg_per_km(300.0, 0.3, 480.0, P0, 0.046), 3.0 * base, 1e-12);
    EXPECT_NEAR(ppm_to_mg_per_km(100.0, 0.6, 480.0, P0, 0.046), 2.0 * base, 1e-12);
    EXPECT_NEAR(ppm_to_mg_per_km(100.0, 0.3, 960.0, P0, 0.046), 0.5 * base, 1e-12);
    EXPECT_THROW(ppm_to_mg_per_km(100.0, 0.3, 0.0, P0, 0.046), DomainError);
}

TEST(Euro5, BenchRowsPass)
{
    auto orr = euro5_check({{"CO", 642.14}, {"HC", 8.06}, {"NOx", 2.33}, {"CO2", 43100.0}});
    EXPECT_EQ(orr.at("CO"), Verdict::Pass);
    EXPECT_EQ(orr.at("HC"), Verdict::Pass);
    EXPECT_EQ(orr.at("NOx"), Verdict::Pass);
    EXPECT_EQ(orr.at("CO2"), Verdict::NotLimited);
    EXPECT_EQ(euro5_check({{"CO", 76.48}, {"HC", 3.0}, {"NOx", 7.04}}).at("NOx"), Verdict::Pass);
}

TEST(Euro5, InclusiveLimitAndMissingPollutant)
{
    EXPECT_EQ(euro5_check({{"CO", 1000.0}, {"HC", 0.0}, {"NOx", 0.0}}).at("CO"), Verdict::Pass);
    EXPECT_EQ(euro5_check({{"CO", 1000.1}, {"HC", 0.0}, {"NOx", 0.0}}).at("CO"), Verdict::Fail);
    EXPECT_THROW(euro5_check({{"CO", 1.0}, {"HC", 0.0}}), ValidationError);
}

TEST(Improvement, BenchSignConvention)
{
    EXPECT_NEAR(improvement_factor(3.1, 2.64).value, 1.17, 0.005);
    EXPECT_NEAR(improvement_factor(3373.0, 412.7).value, 8.17, 0.005);
    EXPECT_NEAR(improvement_factor(6.35, 22.4).value, -3.53, 0.005);
    EXPECT_TRUE(improvement_factor(5.0, 0.0).infinite);
    EXPECT_EQ(improvement_factor(4.0, 4.0).value, 1.0);
}

TEST(Improvement, NeutralBandKeepsNearUnityRatiosPositive)
{
    EXPECT_NEAR(improvement_factor(12.24, 12.3, 0.03).value, 12.24 / 12.3, 1e-12);
    EXPECT_LT(improvement_factor(12.24, 12.3, 0.0).value, -1.0);
}

TEST(Improvement, SelfComparisonIsUnity)
{
    EmissionRecord r = make_emission_record(0.0, Strategy::OR, 3.1, 484.4, {3373.0, 12.24, 6.8, 6.35, 1.0}, 48.7, kCal);
    for (const auto& [name, f] : improvement_factors(r, r))
        EXPECT_EQ(f.value, 1.0) << name;
    EmissionRecord other = r;
    other.grade = 0.01;
    EXPECT_THROW(improvement_factors(r, other), ValidationError);
}

TEST(EmissionRecord, PerKmChain)
{
    double t = oracle_gas_temperature();
    auto r = make_emission_record(0.0, Strategy::OR, 3.1, t, {3373.0, 12.24, 6.8, 6.35, 1.0}, 48.7, kCal);
    EXPECT_NEAR(r.volume_flow, 15.63, 1e-9);
    double vd = 15.63 / 48.7;
    EXPECT_NEAR(r.per_km.at("CO2"), 0.1224 * vd * P0 / (R * t) * 0.044 * 1e6, 1e-6);
    EXPECT_NEAR(r.per_km.at("NOx"), 6.35e-6 * vd * P0 / (R * t) * 0.046 * 1e6, 1e-9);
    for (const auto& [name, v] : r.per_km)
        EXPECT_GE(v, 0.0) << name;
}

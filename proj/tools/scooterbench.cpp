#include <CLI11.hpp>

#include <iostream>
#include <sstream>
#include <string>

#include "scooterbench/config.hpp"
#include "scooterbench/harness.hpp"

namespace sb = scooterbench;

namespace {

enum Exit { kOk = 0, kUsage = 1, kConfig = 2, kSimulation = 3 };

sb::HarnessConfig load(const std::string& path)
{
    return path.empty() ? sb::HarnessConfig{} : sb::load_config(path);
}

std::vector<double> parse_grades(const std::string& text)
{
    if (text == "default")
        return sb::default_sweep_grades();
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t pos = 0;
            double pct = std::stod(item, &pos);
            if (pos != item.size())
                throw std::invalid_argument(item);
            out.push_back(pct / 100.0);
        } catch (const std::exception&) {
            throw sb::ConfigError("--grades: '" + item + "' is not a number");
        }
    }
    if (out.empty())
        throw sb::ConfigError("--grades is empty");
    return out;
}

void print_summary(const sb::SweepReport& rep)
{
    for (const auto& r : rep.improvements)
        if (r.grade == 0.0)
            std::cout << "level " << r.quantity << ": " << sb::improvement_text(r.factor) << '\n';
    for (const auto& f : rep.flags)
        std::cout << "flag " << sb::num(f.grade * 100.0) << " % " << sb::to_string(f.strategy) << ": " << f.flag
                  << '\n';
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Chassis-dynamometer and emissions bench for speed-restricted scooters"};
    app.require_subcommand(1);

    std::string config_path, out_dir, in_dir, grades = "default", strategy = "both", format = "csv";
    std::uint64_t seed = 0;

    auto* coast = app.add_subcommand("coastdown", "simulate opposite-direction coast-down runs and fit the road load");
    coast->add_option("--config", config_path, "configuration file")->check(CLI::ExistingFile);
    coast->add_option("--out", out_dir, "output directory")->required();

    auto* sweep = app.add_subcommand("sweep", "static grade sweep for both restriction strategies");
    sweep->add_option("--config", config_path, "configuration file")->check(CLI::ExistingFile);
    sweep->add_option("--grades", grades, "comma-separated grades in percent, or 'default'");
    sweep->add_option("--strategy", strategy, "or, vc or both")->check(CLI::IsMember({"or", "vc", "both", "OR", "VC"}));
    auto* seed_opt = sweep->add_option("--seed", seed, "master seed");
    sweep->add_option("--out", out_dir, "output directory")->required();

    auto* parity = app.add_subcommand("road-vs-dyno", "steady cruise throttle on the road and on the dynamometer");
    parity->add_option("--config", config_path, "configuration file")->check(CLI::ExistingFile);
    parity->add_option("--out", out_dir, "output directory")->required();

    auto* report = app.add_subcommand("report", "rebuild improvement and per-km tables from a sweep directory");
    report->add_option("--in", in_dir, "sweep output directory")->required()->check(CLI::ExistingDirectory);
    report->add_option("--format", format, "output format")->check(CLI::IsMember({"csv"}));
    report->add_option("--config", config_path, "configuration file")->check(CLI::ExistingFile);
    report->add_option("--out", out_dir, "output directory (defaults to --in)");

    auto* defaults = app.add_subcommand("defaults", "print the built-in configuration");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kUsage;
    }

    try {
        if (*defaults) {
            sb::write_config(std::cout, sb::HarnessConfig{});
        } else if (*coast) {
            auto cfg = load(config_path);
            auto r = sb::run_coastdown(cfg);
            sb::commit_files(out_dir, sb::coastdown_files(r, cfg));
            std::cout << "quad_coeff " << sb::num(r.fit.curve.quad_coeff) << " const_coeff "
                      << sb::num(r.fit.curve.const_coeff) << " c_w " << sb::num(r.derived.drag_coeff) << " f_R "
                      << sb::num(r.derived.rolling_coeff) << '\n';
        } else if (*sweep) {
            auto cfg = load(config_path);
            cfg.sweep.grades = parse_grades(grades);
            cfg.sweep.strategy = strategy;
            if (*seed_opt)
                cfg.sweep.seed = seed;
            cfg.validate();
            auto rep = sb::run_dyno_sweep(cfg);
            sb::emit_report(rep, cfg.emissions, out_dir);
            print_summary(rep);
        } else if (*parity) {
            auto cfg = load(config_path);
            auto rows = sb::run_road_vs_dyno(cfg);
            sb::commit_files(out_dir, sb::road_vs_dyno_files(rows));
            for (const auto& r : rows)
                std::cout << sb::num(r.speed) << " km/h: road " << sb::num(r.road_throttle) << " %, dyno "
                          << sb::num(r.dyno_throttle) << " %\n";
        } else if (*report) {
            auto cfg = load(config_path);
            sb::regenerate_report(in_dir, out_dir.empty() ? in_dir : out_dir, cfg.emissions);
        }
    } catch (const sb::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kSimulation;
    }
    return kOk;
}

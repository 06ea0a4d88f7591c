#pragma once

#include <algorithm>
#include <cmath>
#include <utility>

#include "powertrain.hpp"
#include "vehicle_dynamics.hpp"
#include "velocity_control.hpp"

namespace scooterbench {

/// Road (or roller dynamometer) load: resistance polynomial plus grade.
struct LoadModel {
    VehicleParams vehicle;
    ResistanceCurve curve;
    double grade = 0.0;

    double force(double v_kmh) const { return resistance_force(curve, std::max(0.0, v_kmh)) + grade_force(vehicle, grade); }
};

struct PlantSnapshot {
    double time = 0.0;           // s
    double velocity = 0.0;       // km/h
    double distance = 0.0;       // m
    double throttle_command = 0.0;
    double throttle = 0.0;       // actual valve position, %
    double load_demand = 0.0;
    OperatingPoint engine;
};

/**
 * Scooter on a grade with either restriction active, advanced at the
 * control rate.  Engine force is held over each control period while the
 * vehicle velocity is integrated with RK4.
 */
class ClosedLoop {
public:
    ClosedLoop(const EngineModel& engine, LoadModel load, Strategy strategy, double v_limit, PiController controller,
               TbwActuator actuator, double v0, double control_rate = 20.0)
        : engine_(engine), load_(std::move(load)), strategy_(strategy), v_limit_(v_limit),
          ctrl_(std::move(controller)), act_(actuator), dt_(1.0 / control_rate)
    {
        snap_.velocity = v0;
        snap_.throttle = act_.position;
    }

    /// Controller and rider act, then the vehicle moves one control period.
    const PlantSnapshot& step()
    {
        const double v = snap_.velocity;
        double throttle = 100.0;
        double offset = 0.0;
        double burn = 0.0;
        if (strategy_ == Strategy::VC) {
            snap_.throttle_command = pi_step(ctrl_, v, dt_);
            throttle = actuator_step(act_, snap_.throttle_command, dt_);
        } else {
            // rider holds full throttle, the ECU restricts via timing
            snap_.throttle_command = 100.0;
            act_.position = 100.0;
            double full = engine_.full_load_force(v);
            snap_.load_demand = full > 0.0 ? load_.force(v) / full : 1.0;
            offset = restriction_ignition_offset(engine_.calibration(), Strategy::OR, v, v_limit_, snap_.load_demand);
            burn = or_exhaust_burn_fraction(engine_.calibration(), v, v_limit_);
        }
        snap_.throttle = throttle;
        snap_.engine = engine_.evaluate(throttle, v, offset, burn);
        integrate(snap_.engine.tractive_force);
        ++steps_;
        snap_.time = static_cast<double>(steps_) * dt_;
        return snap_;
    }

    const PlantSnapshot& snapshot() const { return snap_; }
    const PiController& controller() const { return ctrl_; }
    const TbwActuator& actuator() const { return act_; }
    PiController& controller() { return ctrl_; }
    double dt() const { return dt_; }
    Strategy strategy() const { return strategy_; }
    const LoadModel& load() const { return load_; }

private:
    void integrate(double drive)
    {
        const double m_eff = load_.vehicle.effective_mass();
        auto acc = [&](double v_ms) { return (drive - load_.force(v_ms * kKmhPerMs)) / m_eff; };
        double v = snap_.velocity / kKmhPerMs;
        double k1 = acc(v);
        double k2 = acc(v + 0.5 * dt_ * k1);
        double k3 = acc(v + 0.5 * dt_ * k2);
        double k4 = acc(v + dt_ * k3);
        double v_next = std::max(0.0, v + dt_ / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4));
        snap_.distance += 0.5 * (v + v_next) * dt_;
        snap_.velocity = v_next * kKmhPerMs;
    }

    const EngineModel& engine_;
    LoadModel load_;
    Strategy strategy_;
    double v_limit_;
    PiController ctrl_;
    TbwActuator act_;
    double dt_;
    long steps_ = 0;
    PlantSnapshot snap_;
};

} // namespace scooterbench

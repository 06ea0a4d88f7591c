#pragma once

#include <algorithm>
#include <cstddef>
#include <initializer_list>
#include <utility>
#include <vector>

#include "errors.hpp"

namespace scooterbench {

/// Piecewise-linear lookup table, clamped at both ends.
class Table1D {
public:
    Table1D() = default;

    Table1D(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y))
    {
        if (x_.empty() || x_.size() != y_.size())
            throw ValidationError("table needs matching, non-empty knot vectors");
        for (std::size_t i = 1; i < x_.size(); ++i)
            if (!(x_[i] > x_[i - 1]))
                throw ValidationError("table knots must be strictly increasing");
    }

    Table1D(std::initializer_list<std::pair<double, double>> knots)
    {
        std::vector<double> x, y;
        for (const auto& k : knots) {
            x.push_back(k.first);
            y.push_back(k.second);
        }
        *this = Table1D(std::move(x), std::move(y));
    }

    double operator()(double q) const
    {
        if (x_.empty())
            throw ValidationError("lookup in empty table");
        if (q <= x_.front())
            return y_.front();
        if (q >= x_.back())
            return y_.back();
        auto it = std::upper_bound(x_.begin(), x_.end(), q);
        std::size_t i = static_cast<std::size_t>(it - x_.begin());
        double w = (q - x_[i - 1]) / (x_[i] - x_[i - 1]);
        return y_[i - 1] + w * (y_[i] - y_[i - 1]);
    }

    const std::vector<double>& x() const { return x_; }
    const std::vector<double>& y() const { return y_; }
    bool empty() const { return x_.empty(); }
    std::size_t size() const { return x_.size(); }

    bool non_decreasing() const
    {
        return std::is_sorted(y_.begin(), y_.end());
    }

    bool operator==(const Table1D&) const = default;

private:
    std::vector<double> x_;
    std::vector<double> y_;
};

/// Bilinear table over (x, y), clamped on every edge.  values[j][i] belongs to (x[i], y[j]).
class Table2D {
public:
    Table2D() = default;

    Table2D(std::vector<double> x, std::vector<double> y, std::vector<std::vector<double>> values)
        : x_(std::move(x)), y_(std::move(y)), v_(std::move(values))
    {
        if (x_.empty() || y_.empty() || v_.size() != y_.size())
            throw ValidationError("2-D table shape mismatch");
        for (const auto& row : v_)
            if (row.size() != x_.size())
                throw ValidationError("2-D table row length mismatch");
        for (std::size_t i = 1; i < x_.size(); ++i)
            if (!(x_[i] > x_[i - 1]))
                throw ValidationError("2-D table x knots must be strictly increasing");
        for (std::size_t j = 1; j < y_.size(); ++j)
            if (!(y_[j] > y_[j - 1]))
                throw ValidationError("2-D table y knots must be strictly increasing");
    }

    double operator()(double qx, double qy) const
    {
        if (x_.empty())
            throw ValidationError("lookup in empty table");
        auto [i, wx] = locate(x_, qx);
        auto [j, wy] = locate(y_, qy);
        auto at = [&](std::size_t jj, std::size_t ii) { return v_[jj][ii]; };
        std::size_t i1 = std::min(i + 1, x_.size() - 1);
        std::size_t j1 = std::min(j + 1, y_.size() - 1);
        double lo = at(j, i) + wx * (at(j, i1) - at(j, i));
        double hi = at(j1, i) + wx * (at(j1, i1) - at(j1, i));
        return lo + wy * (hi - lo);
    }

    const std::vector<double>& x() const { return x_; }
    const std::vector<double>& y() const { return y_; }
    const std::vector<std::vector<double>>& values() const { return v_; }
    bool empty() const { return x_.empty(); }

    bool operator==(const Table2D&) const = default;

private:
    static std::pair<std::size_t, double> locate(const std::vector<double>& k, double q)
    {
        if (k.size() == 1 || q <= k.front())
            return {0, 0.0};
        if (q >= k.back())
            return {k.size() - 1, 0.0};
        auto it = std::upper_bound(k.begin(), k.end(), q);
        std::size_t i = static_cast<std::size_t>(it - k.begin()) - 1;
        return {i, (q - k[i]) / (k[i + 1] - k[i])};
    }

    std::vector<double> x_;
    std::vector<double> y_;
    std::vector<std::vector<double>> v_;
};

} // namespace scooterbench

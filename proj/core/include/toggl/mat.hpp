#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

namespace toggl {

// Dense row-major double matrix. Vectors are 1 x n matrices so that model
// parameters and their gradients share one representation.
struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> d;

    Mat() = default;
    Mat(std::size_t r, std::size_t c) : rows(r), cols(c), d(r * c, 0.0) {}

    double &operator()(std::size_t r, std::size_t c) { return d[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return d[r * cols + c]; }

    double *row(std::size_t r) { return d.data() + r * cols; }
    const double *row(std::size_t r) const { return d.data() + r * cols; }

    std::size_t size() const { return d.size(); }

    void fill(double v) { std::fill(d.begin(), d.end(), v); }
};

} // namespace toggl

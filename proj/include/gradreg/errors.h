#pragma once

#include <stdexcept>
#include <string>

namespace gradreg {

// File and stream failures (CLI exit code 1).
struct io_error : std::runtime_error {
    explicit io_error(const std::string& what) : std::runtime_error(what) {}
};

// Numerical divergence during optimization (CLI exit code 3).
// Shape and config violations use std::invalid_argument (exit code 2).
struct divergence_error : std::runtime_error {
    explicit divergence_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace gradreg

#pragma once

#include <cstddef>
#include <iosfwd>

namespace optbench {

struct SelftestOptions {
    /// Check the models at reduced width instead of the documented one.
    bool reduced_models = false;
    double tolerance = 1e-5;
    bool gradients = true;
    bool optimizers = true;
};

/// Finite-difference checks for every tape op and every model, plus scalar
/// reference trajectories for the four optimizers. Prints one line per check
/// and returns the number of failures.
std::size_t run_selftest(std::ostream& out, const SelftestOptions& options = {});

}  // namespace optbench

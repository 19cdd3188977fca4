#pragma once

#include <vector>

namespace pinnlab {

/// Semi-implicit (IMEX Euler) finite differences for
///   u_t = D u_xx + k (u - u^3),  x in [-1, 1) periodic, t in [0, 1],
/// diffusion implicit (cyclic tridiagonal solve), cubic reaction explicit.
struct ImexConfig {
    int space_points = 2000;
    int time_steps = 20000;
    int snapshots = 1000;  ///< stored time levels besides t=0; must divide time_steps
    double diffusion = 1e-4;
    double reaction = 5.0;
    double blowup_bound = 10.0;
};

double allen_cahn_initial(double x);

class AllenCahnReference {
public:
    /// Throws std::runtime_error when the solution leaves blowup_bound.
    static AllenCahnReference solve(const ImexConfig& config = {});

    const ImexConfig& config() const { return config_; }

    /// Linear interpolation in time between stored levels and periodic
    /// linear interpolation in x. At t = 0 the initial condition is returned
    /// exactly.
    double at(double x, double t) const;

    /// Values on the uniform nx x nt grid over [-1, 1] x [0, 1], t-outer.
    std::vector<double> sample(int nx, int nt) const;

    double max_abs() const;

private:
    ImexConfig config_;
    std::vector<std::vector<double>> levels_;
};

}  // namespace pinnlab

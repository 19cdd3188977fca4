#pragma once

// Run configuration and its key = value text form.
//
//   [run]      precision, seed, outer_steps, output_dir, stall_patience,
//              checkpoint_every
//   [problem]  pde, then any PDE parameter (beta, rho, ...)
//   [model]    depth, width
//   [grid]     nx, nt, eval_nx, eval_nt (0 = same as training grid)
//   [loss]     lambda_f, lambda_b
//   [lbfgs]    every LbfgsConfig field
//   [phase]    loss_low, err_low, err_high
//
// '#' and ';' start comments. Unknown sections or keys are errors.

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>

#include "pinnlab/lbfgs.hpp"
#include "pinnlab/loss.hpp"
#include "pinnlab/pde.hpp"
#include "pinnlab/precision.hpp"

namespace pinnlab {

struct RunConfig {
    PdeKind pde = PdeKind::convection;
    std::map<std::string, double> pde_params;  ///< overrides of the problem defaults
    Format precision = Format::fp64;
    std::uint64_t seed = 0;
    int depth = 3;
    int width = 64;
    int nx = 51;
    int nt = 51;
    int eval_nx = 0;
    int eval_nt = 0;
    int outer_steps = 500;
    LbfgsConfig lbfgs;
    LossWeights weights;
    PhaseThresholds phase;
    int stall_patience = 20;  ///< 0 disables the early exit
    int checkpoint_every = 50;  ///< 0 keeps only the final checkpoint
    std::string output_dir = "runs/default";

    int effective_eval_nx() const { return eval_nx > 0 ? eval_nx : nx; }
    int effective_eval_nt() const { return eval_nt > 0 ? eval_nt : nt; }

    /// Throws std::invalid_argument on out-of-range fields or unknown PDE
    /// parameters.
    void validate() const;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Canonical text. parse_config(serialize_config(c)) == c field by field.
std::string serialize_config(const RunConfig& config);
/// Throws ConfigError with a line number on malformed input.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::string& path);
void save_config(const RunConfig& config, const std::string& path);

/// Sets one field from its "section.key" name, e.g. "lbfgs.max_inner_iter".
/// Bare keys are looked up in every section; PDE parameters may be given as
/// "problem.beta" or "beta".
void set_config_value(RunConfig& config, std::string_view dotted_key, std::string_view value);

/// Problem instance for the config, with the Allen-Cahn reference solved
/// and attached when needed.
PdeProblem build_problem(const RunConfig& config);

bool operator==(const RunConfig& a, const RunConfig& b);

}  // namespace pinnlab

#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pinnlab/config.hpp"
#include "pinnlab/lbfgs.hpp"
#include "pinnlab/loss.hpp"
#include "pinnlab/model.hpp"
#include "pinnlab/rng.hpp"

namespace pinnlab {

// ---------------------------------------------------------------------------
// Checkpoints.
//
// Text header, then the exact config text, then little-endian binary64
// parameters:
//
//   PINNCKPT <format_version>
//   precision <name>
//   outer_step <n>
//   rng_state <4 x hex u64>
//   depth <n>
//   width <n>
//   param_count <n>
//   config_bytes <n>
//   <config text>
//   end_header
//   <8 * param_count bytes>
// ---------------------------------------------------------------------------

constexpr int kCheckpointVersion = 1;

struct Checkpoint {
    int format_version = kCheckpointVersion;
    RunConfig config;
    Format precision = Format::fp64;
    long outer_step = 0;
    Rng::State rng_state{};
    MlpParams params;
};

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

/// Re-tags a checkpoint for `precision`. Widening embeds values exactly;
/// narrowing rounds and is refused unless `allow_narrowing`.
Checkpoint convert_precision(const Checkpoint& ckpt, Format precision, bool allow_narrowing = false);

// ---------------------------------------------------------------------------
// Training.
// ---------------------------------------------------------------------------

struct TrainingRecord {
    long outer_step = 0;
    int inner_count = 0;
    StopReason stop_reason = StopReason::max_inner;
    double loss_total = 0.0;
    double loss_f = 0.0;
    double loss_b = 0.0;
    double rmae = 0.0;
    double rrmse = 0.0;
    double grad_inf_norm = 0.0;
    double param_l2_norm = 0.0;
    Phase phase = Phase::unconverged;
    double wall_seconds = 0.0;
};

inline constexpr const char* kTrainingCsvHeader =
    "outer_step,inner_count,stop_reason,loss_total,loss_f,loss_b,rmae,rrmse,grad_inf_norm,param_l2_norm,phase,"
    "wall_seconds";

std::string format_record(const TrainingRecord& r);
/// Parses a CSV written by a run (header checked).
std::vector<TrainingRecord> read_training_csv(const std::string& path);

enum class RunEnd { completed, stalled, non_finite };

std::string_view to_string(RunEnd end);

struct RunResult {
    std::vector<TrainingRecord> records;
    Checkpoint final_checkpoint;
    double initial_loss = 0.0;   ///< loss at the starting parameters
    double initial_rmae = 0.0;
    RunEnd end = RunEnd::completed;
    std::string message;
};

struct RunOptions {
    bool write_files = true;  ///< CSV, config and checkpoints under output_dir
    std::function<void(const TrainingRecord&)> on_record;
};

/// Fresh run: init model from the seed, then outer_steps L-BFGS steps.
RunResult run(const RunConfig& config, const RunOptions& options = {});

/// Continues from a checkpoint under `precision` for `extra_steps` outer
/// steps with a fresh optimizer state. Records continue the step count.
RunResult resume(const Checkpoint& ckpt, Format precision, int extra_steps, const std::string& output_dir,
                 bool allow_narrowing = false, const RunOptions& options = {});

// ---------------------------------------------------------------------------
// Evaluation and sweeps.
// ---------------------------------------------------------------------------

using FieldFunction = std::function<double(double x, double t)>;

/// Errors of any field against the problem's reference on a dense nx x nt
/// grid; optional `x,t,u_pred,u_true` CSV.
FieldError evaluate_field(const FieldFunction& u, const PdeProblem& problem, int nx, int nt,
                          const std::string& field_csv = {});

/// Dense-grid FP64 prediction of a checkpoint.
FieldError evaluate(const Checkpoint& ckpt, int nx, int nt, const std::string& field_csv = {});

struct SweepCell {
    Format precision = Format::fp64;
    std::map<std::string, double> params;
    bool ok = false;
    std::string error;
    RunEnd end = RunEnd::completed;
    long outer_steps = 0;
    long total_inner = 0;
    long change_tolerance_stops = 0;
    double final_loss = 0.0;
    double final_rmae = 0.0;
    double final_rrmse = 0.0;
    Phase final_phase = Phase::unconverged;
};

/// Every precision x parameter combination, each in its own subdirectory of
/// base.output_dir, written to summary.csv there. Failing cells are
/// recorded, not thrown.
std::vector<SweepCell> sweep(const RunConfig& base, const std::vector<Format>& precisions,
                             const std::vector<std::map<std::string, double>>& param_grid, int workers = 1);

}  // namespace pinnlab

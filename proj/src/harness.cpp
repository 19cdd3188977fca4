#include "pinnlab/harness.hpp"

#include <atomic>
#include <bit>
#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "pinnlab/csv.hpp"
#include "pinnlab/jet_kernel.hpp"

namespace pinnlab {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Checkpoints.
// ---------------------------------------------------------------------------

std::string encode_checkpoint(const Checkpoint& ckpt) {
    const std::string config = serialize_config(ckpt.config);
    std::string out;
    out += "PINNCKPT " + std::to_string(ckpt.format_version) + "\n";
    out += "precision " + std::string(to_string(ckpt.precision)) + "\n";
    out += "outer_step " + std::to_string(ckpt.outer_step) + "\n";
    char rng[4 * 17 + 1];
    std::snprintf(rng, sizeof(rng), "%016" PRIx64 " %016" PRIx64 " %016" PRIx64 " %016" PRIx64, ckpt.rng_state[0],
                  ckpt.rng_state[1], ckpt.rng_state[2], ckpt.rng_state[3]);
    out += "rng_state " + std::string(rng) + "\n";
    out += "depth " + std::to_string(ckpt.params.depth()) + "\n";
    out += "width " + std::to_string(ckpt.params.width()) + "\n";
    out += "param_count " + std::to_string(ckpt.params.size()) + "\n";
    out += "config_bytes " + std::to_string(config.size()) + "\n";
    out += config;
    out += "end_header\n";
    for (double v : ckpt.params.flat()) {
        const auto bits = std::bit_cast<std::uint64_t>(v);
        for (int b = 0; b < 8; ++b) {
            out.push_back(char((bits >> (8 * b)) & 0xFF));
        }
    }
    return out;
}

namespace {

class HeaderReader {
public:
    explicit HeaderReader(const std::string& bytes) : bytes_(bytes) {}

    std::string line() {
        const auto nl = bytes_.find('\n', pos_);
        if (nl == std::string::npos) {
            throw CheckpointError("checkpoint: truncated header");
        }
        std::string l = bytes_.substr(pos_, nl - pos_);
        pos_ = nl + 1;
        return l;
    }

    std::string field(const std::string& name) {
        const std::string l = line();
        if (l.rfind(name + " ", 0) != 0) {
            throw CheckpointError("checkpoint: expected '" + name + "', got '" + l + "'");
        }
        return l.substr(name.size() + 1);
    }

    std::string take(std::size_t n) {
        if (bytes_.size() - pos_ < n) {
            throw CheckpointError("checkpoint: truncated section");
        }
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    std::size_t remaining() const { return bytes_.size() - pos_; }
    std::size_t position() const { return pos_; }

private:
    const std::string& bytes_;
    std::size_t pos_ = 0;
};

long long parse_ll(const std::string& s, const char* what) {
    try {
        std::size_t used = 0;
        const long long v = std::stoll(s, &used);
        if (used != s.size()) throw std::invalid_argument(what);
        return v;
    } catch (const std::exception&) {
        throw CheckpointError(std::string("checkpoint: bad ") + what + " '" + s + "'");
    }
}

}  // namespace

Checkpoint decode_checkpoint(const std::string& bytes) {
    HeaderReader in(bytes);
    Checkpoint ck;
    ck.format_version = int(parse_ll(in.field("PINNCKPT"), "format version"));
    if (ck.format_version != kCheckpointVersion) {
        throw CheckpointError("checkpoint: unsupported format version " + std::to_string(ck.format_version));
    }
    try {
        ck.precision = parse_format(in.field("precision"));
    } catch (const std::invalid_argument& e) {
        throw CheckpointError(std::string("checkpoint: ") + e.what());
    }
    ck.outer_step = long(parse_ll(in.field("outer_step"), "outer_step"));
    {
        std::istringstream rs(in.field("rng_state"));
        for (auto& w : ck.rng_state) {
            if (!(rs >> std::hex >> w)) {
                throw CheckpointError("checkpoint: bad rng_state");
            }
        }
    }
    const int depth = int(parse_ll(in.field("depth"), "depth"));
    const int width = int(parse_ll(in.field("width"), "width"));
    const auto count = std::size_t(parse_ll(in.field("param_count"), "param_count"));
    const auto config_bytes = std::size_t(parse_ll(in.field("config_bytes"), "config_bytes"));
    try {
        ck.config = parse_config(in.take(config_bytes));
    } catch (const ConfigError& e) {
        throw CheckpointError(std::string("checkpoint: embedded ") + e.what());
    }
    if (in.line() != "end_header") {
        throw CheckpointError("checkpoint: missing end_header");
    }
    if (depth < 1 || width < 1 || parameter_count(depth, width) != count) {
        throw CheckpointError("checkpoint: parameter count does not match the network shape");
    }
    if (in.remaining() != 8 * count) {
        throw CheckpointError("checkpoint: payload has " + std::to_string(in.remaining()) + " bytes, expected " +
                              std::to_string(8 * count));
    }
    const std::string payload = in.take(8 * count);
    ck.params = MlpParams(depth, width);
    auto flat = ck.params.flat();
    for (std::size_t i = 0; i < count; ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) {
            bits |= std::uint64_t(std::uint8_t(payload[8 * i + std::size_t(b)])) << (8 * b);
        }
        flat[i] = std::bit_cast<double>(bits);
    }
    return ck;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    const std::string bytes = encode_checkpoint(ckpt);
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) {
            throw CheckpointError("cannot open '" + tmp + "' for writing");
        }
        out.write(bytes.data(), std::streamsize(bytes.size()));
        if (!out) {
            throw CheckpointError("failed writing '" + tmp + "'");
        }
    }
    fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw CheckpointError("cannot open checkpoint '" + path + "'");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return decode_checkpoint(buf.str());
}

Checkpoint convert_precision(const Checkpoint& ckpt, Format precision, bool allow_narrowing) {
    const PrecisionSpec target = spec_for(precision);
    const PrecisionSpec source = spec_for(ckpt.precision);
    const bool narrowing =
        target.significand_bits < source.significand_bits || target.exponent_bits < source.exponent_bits;
    if (narrowing && !allow_narrowing) {
        throw std::invalid_argument("converting " + std::string(to_string(ckpt.precision)) + " to " +
                                    std::string(to_string(precision)) + " loses precision; narrowing not allowed");
    }
    Checkpoint out = ckpt;
    out.precision = precision;
    out.config.precision = precision;
    for (double& v : out.params.flat()) {
        v = round_to(target, v);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Records.
// ---------------------------------------------------------------------------

std::string format_record(const TrainingRecord& r) {
    std::string s;
    s += std::to_string(r.outer_step) + ",";
    s += std::to_string(r.inner_count) + ",";
    s += std::string(to_string(r.stop_reason)) + ",";
    for (double v : {r.loss_total, r.loss_f, r.loss_b, r.rmae, r.rrmse, r.grad_inf_norm, r.param_l2_norm}) {
        s += format_double(v) + ",";
    }
    s += std::string(to_string(r.phase)) + ",";
    s += format_double(r.wall_seconds);
    return s;
}

std::vector<TrainingRecord> read_training_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open '" + path + "'");
    }
    std::string line;
    if (!std::getline(in, line) || line != kTrainingCsvHeader) {
        throw std::runtime_error("'" + path + "' does not have the training CSV header");
    }
    std::vector<TrainingRecord> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            cells.push_back(cell);
        }
        if (cells.size() != 12) {
            throw std::runtime_error("'" + path + "': malformed row '" + line + "'");
        }
        TrainingRecord r;
        r.outer_step = std::stol(cells[0]);
        r.inner_count = std::stoi(cells[1]);
        r.stop_reason = parse_stop_reason(cells[2]);
        r.loss_total = std::stod(cells[3]);
        r.loss_f = std::stod(cells[4]);
        r.loss_b = std::stod(cells[5]);
        r.rmae = std::stod(cells[6]);
        r.rrmse = std::stod(cells[7]);
        r.grad_inf_norm = std::stod(cells[8]);
        r.param_l2_norm = std::stod(cells[9]);
        r.phase = parse_phase(cells[10]);
        r.wall_seconds = std::stod(cells[11]);
        out.push_back(r);
    }
    return out;
}

std::string_view to_string(RunEnd end) {
    switch (end) {
    case RunEnd::completed: return "completed";
    case RunEnd::stalled: return "stalled";
    case RunEnd::non_finite: return "non_finite";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Training loop.
// ---------------------------------------------------------------------------

namespace {

std::string step_checkpoint_name(long step) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "checkpoint_step_%06ld.ckpt", step);
    return buf;
}

RunResult train_from(const RunConfig& cfg, MlpParams params, long start_step, int steps, const Rng::State& rng_state,
                     const RunOptions& opt) {
    cfg.validate();
    if (steps < 0) {
        throw std::invalid_argument("number of outer steps must be >= 0");
    }
    const auto started = std::chrono::steady_clock::now();
    const PrecisionSpec prec = spec_for(cfg.precision);
    const PdeProblem problem = build_problem(cfg);
    const CollocationSet colloc = make_grid(problem, cfg.nx, cfg.nt);
    const ReferenceSet ref = make_reference_set(problem, cfg.effective_eval_nx(), cfg.effective_eval_nt());

    const fs::path dir(cfg.output_dir);
    std::ofstream csv;
    if (opt.write_files) {
        fs::create_directories(dir);
        save_config(cfg, (dir / "config.ini").string());
        csv.open(dir / "training.csv", std::ios::binary);
        if (!csv) {
            throw std::runtime_error("cannot open '" + (dir / "training.csv").string() + "' for writing");
        }
        csv << kTrainingCsvHeader << '\n';
    }

    Checkpoint ckpt;
    ckpt.config = cfg;
    ckpt.precision = cfg.precision;
    ckpt.rng_state = rng_state;
    const auto snapshot = [&](const MlpParams& p, long step) {
        ckpt.params = p;
        ckpt.outer_step = step;
        return ckpt;
    };

    MlpParams work = params;
    const Objective objective = [&](std::span<const double> theta, std::vector<double>& grad) {
        work.assign(theta);
        auto eval = total_loss(work, problem, colloc, cfg.weights, prec, true);
        grad = std::move(eval.grad);
        return eval.breakdown.total;
    };

    RunResult result;
    result.initial_loss = total_loss(params, problem, colloc, cfg.weights, prec, false).breakdown.total;
    result.initial_rmae = field_error(params, ref).rmae;

    std::vector<double> x(params.flat().begin(), params.flat().end());
    std::vector<double> before;
    LbfgsState state(cfg.lbfgs, prec);
    std::optional<Phase> previous;
    int stall_run = 0;
    long step_no = start_step;

    for (int s = 0; s < steps; ++s) {
        before = x;
        StepReport rep;
        try {
            rep = step(state, objective, x);
        } catch (const NonFiniteLossError& e) {
            x = before;
            result.end = RunEnd::non_finite;
            result.message = e.what();
            break;
        }
        ++step_no;
        work.assign(x);
        const LossBreakdown lb = total_loss(work, problem, colloc, cfg.weights, prec, false).breakdown;
        const FieldError fe = field_error(work, ref);

        TrainingRecord r;
        r.outer_step = step_no;
        r.inner_count = rep.inner_iters;
        r.stop_reason = rep.stop_reason;
        r.loss_total = lb.total;
        r.loss_f = lb.l_f;
        r.loss_b = lb.l_b;
        r.rmae = fe.rmae;
        r.rrmse = fe.rrmse;
        r.grad_inf_norm = rep.grad_inf_norm;
        double sq = 0.0;
        for (double v : x) {
            sq += v * v;
        }
        r.param_l2_norm = std::sqrt(sq);
        r.phase = classify_phase(r.loss_total, r.rmae, cfg.phase, previous);
        previous = r.phase;
        r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        result.records.push_back(r);
        if (opt.write_files) {
            csv << format_record(r) << '\n';
            csv.flush();
        }
        if (opt.on_record) {
            opt.on_record(r);
        }

        std::vector<double> update(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            update[i] = x[i] - before[i];
        }
        stall_run = stall_diagnostic(x, update, prec).underflow_stall ? stall_run + 1 : 0;

        if (opt.write_files && cfg.checkpoint_every > 0 && (step_no - start_step) % cfg.checkpoint_every == 0) {
            save_checkpoint(snapshot(work, step_no), (dir / step_checkpoint_name(step_no)).string());
        }
        if (cfg.stall_patience > 0 && stall_run >= cfg.stall_patience) {
            result.end = RunEnd::stalled;
            result.message = "parameter updates below machine epsilon for " + std::to_string(stall_run) +
                             " consecutive outer steps";
            break;
        }
    }

    work.assign(x);
    result.final_checkpoint = snapshot(work, step_no);
    if (opt.write_files) {
        save_checkpoint(result.final_checkpoint, (dir / "checkpoint_final.ckpt").string());
    }
    return result;
}

}  // namespace

RunResult run(const RunConfig& config, const RunOptions& options) {
    config.validate();
    Rng rng(config.seed);
    MlpParams params = init_mlp(config.seed, config.depth, config.width, spec_for(config.precision));
    return train_from(config, std::move(params), 0, config.outer_steps, rng.state(), options);
}

RunResult resume(const Checkpoint& ckpt, Format precision, int extra_steps, const std::string& output_dir,
                 bool allow_narrowing, const RunOptions& options) {
    Checkpoint start = convert_precision(ckpt, precision, allow_narrowing);
    if (!start.params.same_shape(MlpParams(start.config.depth, start.config.width))) {
        throw std::invalid_argument("checkpoint parameters do not match its config's network shape");
    }
    RunConfig cfg = start.config;
    cfg.output_dir = output_dir;
    cfg.outer_steps = extra_steps;
    return train_from(cfg, std::move(start.params), start.outer_step, extra_steps, start.rng_state, options);
}

// ---------------------------------------------------------------------------
// Evaluation and sweeps.
// ---------------------------------------------------------------------------

FieldError evaluate_field(const FieldFunction& u, const PdeProblem& problem, int nx, int nt,
                          const std::string& field_csv) {
    const ReferenceSet ref = make_reference_set(problem, nx, nt);
    std::vector<double> pred(ref.points.size());
    for (std::size_t k = 0; k < pred.size(); ++k) {
        pred[k] = u(ref.points[k].x, ref.points[k].t);
    }
    if (!field_csv.empty()) {
        CsvWriter csv(field_csv, {"x", "t", "u_pred", "u_true"});
        for (std::size_t k = 0; k < pred.size(); ++k) {
            csv.row(ref.points[k].x, ref.points[k].t, pred[k], ref.truth[k]);
        }
    }
    return {rmae(pred, ref.truth), rrmse(pred, ref.truth)};
}

FieldError evaluate(const Checkpoint& ckpt, int nx, int nt, const std::string& field_csv) {
    const PdeProblem problem = build_problem(ckpt.config);
    const MlpParams& params = ckpt.params;
    return evaluate_field([&](double x, double t) { return forward(params, x, t, kFp64); }, problem, nx, nt,
                          field_csv);
}

namespace {

std::string params_label(const std::map<std::string, double>& params, char sep) {
    std::string s;
    for (const auto& [k, v] : params) {
        if (!s.empty()) s += sep;
        s += k + "=" + format_double(v);
    }
    return s;
}

}  // namespace

std::vector<SweepCell> sweep(const RunConfig& base, const std::vector<Format>& precisions,
                             const std::vector<std::map<std::string, double>>& param_grid, int workers) {
    if (precisions.empty()) {
        throw std::invalid_argument("sweep: no precisions given");
    }
    const std::vector<std::map<std::string, double>> grid =
        param_grid.empty() ? std::vector<std::map<std::string, double>>{{}} : param_grid;

    std::vector<SweepCell> cells;
    std::vector<RunConfig> configs;
    for (Format f : precisions) {
        for (const auto& p : grid) {
            SweepCell cell;
            cell.precision = f;
            cell.params = p;
            RunConfig cfg = base;
            cfg.precision = f;
            for (const auto& [k, v] : p) {
                cfg.pde_params[k] = v;
            }
            std::string name(to_string(f));
            if (!p.empty()) {
                name += "_" + params_label(p, '_');
            }
            cfg.output_dir = (fs::path(base.output_dir) / name).string();
            cells.push_back(cell);
            configs.push_back(cfg);
        }
    }

    std::atomic<std::size_t> next{0};
    const auto worker = [&]() {
        for (std::size_t k = next++; k < cells.size(); k = next++) {
            SweepCell& cell = cells[k];
            try {
                const RunResult res = run(configs[k]);
                cell.ok = true;
                cell.end = res.end;
                cell.outer_steps = long(res.records.size());
                for (const auto& r : res.records) {
                    cell.total_inner += r.inner_count;
                    cell.change_tolerance_stops += r.stop_reason == StopReason::change_tolerance;
                }
                if (!res.records.empty()) {
                    const auto& last = res.records.back();
                    cell.final_loss = last.loss_total;
                    cell.final_rmae = last.rmae;
                    cell.final_rrmse = last.rrmse;
                    cell.final_phase = last.phase;
                } else {
                    cell.final_loss = res.initial_loss;
                    cell.final_rmae = res.initial_rmae;
                }
                if (res.end == RunEnd::non_finite) {
                    cell.error = res.message;
                }
            } catch (const std::exception& e) {
                cell.ok = false;
                cell.error = e.what();
            }
        }
    };
    const int n = std::max(1, workers);
    if (n == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < n; ++t) {
            pool.emplace_back(worker);
        }
        for (auto& th : pool) {
            th.join();
        }
    }

    fs::create_directories(base.output_dir);
    CsvWriter csv((fs::path(base.output_dir) / "summary.csv").string(),
                  {"precision", "params", "ok", "end", "outer_steps", "total_inner", "change_tolerance_stops",
                   "final_loss", "final_rmae", "final_rrmse", "final_phase", "error"});
    for (const auto& c : cells) {
        std::string err = c.error;
        for (char& ch : err) {
            if (ch == ',' || ch == '\n') ch = ';';
        }
        csv.row(std::string(to_string(c.precision)), params_label(c.params, ';'), c.ok ? 1 : 0,
                std::string(to_string(c.end)), c.outer_steps, c.total_inner, c.change_tolerance_stops, c.final_loss,
                c.final_rmae, c.final_rrmse, std::string(to_string(c.final_phase)), err);
    }
    return cells;
}

}  // namespace pinnlab

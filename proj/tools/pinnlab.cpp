// pinnlab command line: train / resume / evaluate / sweep / landscape /
// oracle-ac. Errors go to stderr as one JSON object and exit nonzero.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pinnlab/config.hpp"
#include "pinnlab/harness.hpp"
#include "pinnlab/landscape.hpp"

using namespace pinnlab;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::pair<std::string, std::string> split_assignment(const std::string& s) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw UsageError("expected key=value, got '" + s + "'");
    }
    return {s.substr(0, eq), s.substr(eq + 1)};
}

std::pair<int, int> parse_grid(const std::string& s) {
    const auto x = s.find_first_of("xX");
    try {
        if (x == std::string::npos) throw std::invalid_argument(s);
        std::size_t a = 0, b = 0;
        const int nx = std::stoi(s.substr(0, x), &a);
        const int nt = std::stoi(s.substr(x + 1), &b);
        if (a != x || b != s.size() - x - 1) throw std::invalid_argument(s);
        return {nx, nt};
    } catch (const std::exception&) {
        throw UsageError("grid must look like NXxNT, got '" + s + "'");
    }
}

double parse_number(const std::string& s) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw UsageError("expected a number, got '" + s + "'");
    }
}

// "beta=10,30,50;rho=1,5" -> cartesian product of the listed values.
std::vector<std::map<std::string, double>> parse_param_grid(const std::string& spec) {
    std::vector<std::map<std::string, double>> grid{{}};
    if (spec.empty()) {
        return grid;
    }
    std::stringstream axes(spec);
    std::string axis;
    while (std::getline(axes, axis, ';')) {
        if (axis.empty()) continue;
        const auto [key, values] = split_assignment(axis);
        std::vector<double> vs;
        std::stringstream vss(values);
        std::string v;
        while (std::getline(vss, v, ',')) {
            vs.push_back(parse_number(v));
        }
        if (vs.empty()) {
            throw UsageError("parameter '" + key + "' has no values");
        }
        std::vector<std::map<std::string, double>> next;
        for (const auto& cell : grid) {
            for (double value : vs) {
                auto c = cell;
                c[key] = value;
                next.push_back(std::move(c));
            }
        }
        grid = std::move(next);
    }
    return grid;
}

struct TrainFlags {
    std::string config_path;
    std::string pde;
    std::vector<std::string> params;
    std::vector<std::string> sets;
    std::string precision;
    long long seed = -1;
    int width = 0;
    int depth = 0;
    std::string grid;
    int outer_steps = -1;
    std::string out;
};

void add_train_flags(CLI::App* app, TrainFlags& f) {
    app->add_option("--config", f.config_path, "config file (default: $PINNLAB_CONFIG if set)");
    app->add_option("--pde", f.pde, "convection | reaction | wave | allen_cahn");
    app->add_option("--param", f.params, "PDE parameter override key=value (repeatable)");
    app->add_option("--set", f.sets, "any config field section.key=value (repeatable)");
    app->add_option("--precision", f.precision, "fp64 | fp32 | tf32 | bf16");
    app->add_option("--seed", f.seed, "initialisation seed");
    app->add_option("--width", f.width, "hidden width");
    app->add_option("--depth", f.depth, "number of hidden layers");
    app->add_option("--grid", f.grid, "collocation grid NXxNT");
    app->add_option("--outer-steps", f.outer_steps, "outer L-BFGS steps");
    app->add_option("--out", f.out, "output directory");
}

RunConfig build_config(const TrainFlags& f) {
    RunConfig cfg;
    std::string path = f.config_path;
    if (path.empty()) {
        if (const char* env = std::getenv("PINNLAB_CONFIG")) {
            path = env;
        }
    }
    if (!path.empty()) {
        cfg = load_config(path);
    }
    if (!f.pde.empty()) cfg.pde = parse_pde(f.pde);
    for (const auto& p : f.params) {
        const auto [k, v] = split_assignment(p);
        cfg.pde_params[k] = parse_number(v);
    }
    for (const auto& s : f.sets) {
        const auto [k, v] = split_assignment(s);
        set_config_value(cfg, k, v);
    }
    if (!f.precision.empty()) cfg.precision = parse_format(f.precision);
    if (f.seed >= 0) cfg.seed = std::uint64_t(f.seed);
    if (f.width > 0) cfg.width = f.width;
    if (f.depth > 0) cfg.depth = f.depth;
    if (!f.grid.empty()) std::tie(cfg.nx, cfg.nt) = parse_grid(f.grid);
    if (f.outer_steps >= 0) cfg.outer_steps = f.outer_steps;
    if (!f.out.empty()) cfg.output_dir = f.out;
    cfg.validate();
    return cfg;
}

json run_summary(const RunResult& res, const std::string& dir) {
    json j;
    j["end"] = std::string(to_string(res.end));
    j["outer_steps"] = res.records.size();
    j["initial_loss"] = res.initial_loss;
    if (!res.records.empty()) {
        const auto& r = res.records.back();
        j["final_loss"] = r.loss_total;
        j["rmae"] = r.rmae;
        j["rrmse"] = r.rrmse;
        j["phase"] = std::string(to_string(r.phase));
        j["last_stop_reason"] = std::string(to_string(r.stop_reason));
    }
    j["output_dir"] = dir;
    if (!res.message.empty()) j["message"] = res.message;
    return j;
}

void print_progress(const TrainingRecord& r) {
    std::cerr << "step " << r.outer_step << " inner " << r.inner_count << " " << to_string(r.stop_reason)
              << " loss " << r.loss_total << " rmae " << r.rmae << " " << to_string(r.phase) << "\n";
}

int emit_error(const std::string& kind, const std::string& message, int code) {
    json j;
    j["error"] = kind;
    j["message"] = message;
    std::cerr << j.dump() << std::endl;
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"pinnlab: precision studies of PINN training with L-BFGS"};
    app.require_subcommand(1);
    bool verbose = false;
    app.add_flag("-v,--verbose", verbose, "per-step progress on stderr");

    TrainFlags train_flags;
    auto* train = app.add_subcommand("train", "train a model from a fresh initialisation");
    add_train_flags(train, train_flags);

    std::string resume_ckpt, resume_precision, resume_out;
    int resume_steps = 0;
    bool allow_narrowing = false;
    auto* resume_cmd = app.add_subcommand("resume", "continue training from a checkpoint, optionally at a new precision");
    resume_cmd->add_option("--checkpoint", resume_ckpt, "checkpoint file")->required();
    resume_cmd->add_option("--precision", resume_precision, "precision to continue in (default: checkpoint's)");
    resume_cmd->add_option("--steps", resume_steps, "extra outer steps")->required();
    resume_cmd->add_option("--out", resume_out, "output directory (default: next to the checkpoint)");
    resume_cmd->add_flag("--allow-narrowing", allow_narrowing, "permit rounding into a narrower format");

    std::string eval_ckpt, eval_grid = "101x101", eval_out;
    auto* eval_cmd = app.add_subcommand("evaluate", "error of a checkpoint against the reference solution");
    eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
    eval_cmd->add_option("--grid", eval_grid, "evaluation grid NXxNT");
    eval_cmd->add_option("--out", eval_out, "field CSV x,t,u_pred,u_true");

    TrainFlags sweep_flags;
    std::string sweep_precisions = "fp32,fp64", sweep_grid;
    int sweep_workers = 1;
    auto* sweep_cmd = app.add_subcommand("sweep", "precision x parameter grid of training runs");
    add_train_flags(sweep_cmd, sweep_flags);
    sweep_cmd->add_option("--precisions", sweep_precisions, "comma-separated precisions");
    sweep_cmd->add_option("--param-grid", sweep_grid, "e.g. beta=10,50;rho=1,5");
    sweep_cmd->add_option("--workers", sweep_workers, "parallel runs");

    std::string land_a, land_b, land_center, land_out, land_grid;
    long long land_seed = 0;
    double land_extent = 1.0;
    int land_points = 64, land_n = 41, land_threads = 1;
    auto* land_cmd = app.add_subcommand("landscape", "segment or plane probe of loss and error");
    land_cmd->add_option("--checkpoint-a", land_a, "segment start");
    land_cmd->add_option("--checkpoint-b", land_b, "segment end");
    land_cmd->add_option("--checkpoint", land_center, "plane centre");
    land_cmd->add_option("--seed", land_seed, "direction seed (plane)");
    land_cmd->add_option("--extent", land_extent, "plane half-width");
    land_cmd->add_option("--points", land_points, "segment resolution");
    land_cmd->add_option("--n", land_n, "plane resolution per axis");
    land_cmd->add_option("--grid", land_grid, "evaluation grid NXxNT (default: the checkpoint's)");
    land_cmd->add_option("--threads", land_threads, "worker threads");
    land_cmd->add_option("--out", land_out, "CSV path")->required();

    std::string ac_out, ac_grid = "101x101";
    auto* ac_cmd = app.add_subcommand("oracle-ac", "write the Allen-Cahn reference solution");
    ac_cmd->add_option("--out", ac_out, "CSV x,t,u")->required();
    ac_cmd->add_option("--grid", ac_grid, "sampling grid NXxNT");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return emit_error("usage", e.what(), 2);
    }

    RunOptions options;
    if (verbose) {
        options.on_record = print_progress;
    }

    try {
        if (*train) {
            const RunConfig cfg = build_config(train_flags);
            const RunResult res = run(cfg, options);
            std::cout << run_summary(res, cfg.output_dir).dump() << std::endl;
            return res.end == RunEnd::non_finite ? 3 : 0;
        }
        if (*resume_cmd) {
            const Checkpoint ck = load_checkpoint(resume_ckpt);
            const Format f = resume_precision.empty() ? ck.precision : parse_format(resume_precision);
            std::string out = resume_out;
            if (out.empty()) {
                out = (fs::path(resume_ckpt).parent_path() / ("resume_" + std::string(to_string(f)))).string();
            }
            const RunResult res = resume(ck, f, resume_steps, out, allow_narrowing, options);
            std::cout << run_summary(res, out).dump() << std::endl;
            return res.end == RunEnd::non_finite ? 3 : 0;
        }
        if (*eval_cmd) {
            const auto [nx, nt] = parse_grid(eval_grid);
            const FieldError fe = evaluate(load_checkpoint(eval_ckpt), nx, nt, eval_out);
            std::cout << json{{"rmae", fe.rmae}, {"rrmse", fe.rrmse}}.dump() << std::endl;
            return 0;
        }
        if (*sweep_cmd) {
            const RunConfig base = build_config(sweep_flags);
            std::vector<Format> precisions;
            std::stringstream ps(sweep_precisions);
            std::string p;
            while (std::getline(ps, p, ',')) {
                if (!p.empty()) precisions.push_back(parse_format(p));
            }
            const auto cells = sweep(base, precisions, parse_param_grid(sweep_grid), sweep_workers);
            json rows = json::array();
            for (const auto& c : cells) {
                rows.push_back({{"precision", std::string(to_string(c.precision))},
                                {"params", c.params},
                                {"ok", c.ok},
                                {"final_rmae", c.final_rmae},
                                {"final_rrmse", c.final_rrmse},
                                {"final_phase", std::string(to_string(c.final_phase))},
                                {"error", c.error}});
            }
            std::cout << json{{"summary", (fs::path(base.output_dir) / "summary.csv").string()}, {"cells", rows}}.dump()
                      << std::endl;
            return 0;
        }
        if (*land_cmd) {
            const bool segment = !land_a.empty() || !land_b.empty();
            if (segment == !land_center.empty() || (segment && (land_a.empty() || land_b.empty()))) {
                throw UsageError("give either --checkpoint-a and --checkpoint-b, or --checkpoint");
            }
            const Checkpoint first = load_checkpoint(segment ? land_a : land_center);
            const PdeProblem problem = build_problem(first.config);
            const CollocationSet colloc = make_grid(problem, first.config.nx, first.config.nt);
            int nx = first.config.effective_eval_nx(), nt = first.config.effective_eval_nt();
            if (!land_grid.empty()) std::tie(nx, nt) = parse_grid(land_grid);
            const ReferenceSet ref = make_reference_set(problem, nx, nt);
            LandscapeProbe probe{problem, colloc, ref, first.config.weights, land_threads};
            json j;
            if (segment) {
                const Checkpoint second = load_checkpoint(land_b);
                const LandscapeSlice s = interpolate_segment(first.params, second.params, land_points, probe);
                write_slice_csv(s, land_out);
                j = {{"kind", "segment"}, {"barrier_height", barrier_height(s)}, {"out", land_out}};
            } else {
                const LandscapeSlice s = slice_2d(first.params, std::uint64_t(land_seed), land_extent, land_n, probe);
                write_slice_csv(s, land_out);
                j = {{"kind", "plane"}, {"out", land_out}};
            }
            std::cout << j.dump() << std::endl;
            return 0;
        }
        if (*ac_cmd) {
            const auto [nx, nt] = parse_grid(ac_grid);
            RunConfig cfg;
            cfg.pde = PdeKind::allen_cahn;
            write_reference_csv(build_problem(cfg), nx, nt, ac_out);
            std::cout << json{{"out", ac_out}, {"grid", ac_grid}}.dump() << std::endl;
            return 0;
        }
    } catch (const UsageError& e) {
        return emit_error("usage", e.what(), 2);
    } catch (const ConfigError& e) {
        return emit_error("config", e.what(), 2);
    } catch (const CheckpointError& e) {
        return emit_error("checkpoint", e.what(), 4);
    } catch (const std::invalid_argument& e) {
        return emit_error("invalid_argument", e.what(), 2);
    } catch (const std::exception& e) {
        return emit_error("runtime", e.what(), 1);
    }
    return 0;
}

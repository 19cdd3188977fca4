#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "pinnlab/harness.hpp"

using namespace pinnlab;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("pinnlab_test_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const std::string& leaf) const { return (path / leaf).string(); }
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

RunConfig tiny_config(const std::string& out) {
    RunConfig c;
    c.pde = PdeKind::convection;
    c.pde_params = {{"beta", 4.0}};
    c.depth = 1;
    c.width = 6;
    c.nx = 6;
    c.nt = 5;
    c.outer_steps = 3;
    c.lbfgs.max_inner_iter = 4;
    c.checkpoint_every = 2;
    c.seed = 11;
    c.output_dir = out;
    return c;
}

// Parameter bytes of a checkpoint; the header names the output directory.
std::string payload(const std::string& ckpt_bytes) { return ckpt_bytes.substr(ckpt_bytes.find("\nend_header\n")); }

std::vector<std::string> csv_without_wall_time(const std::string& path) {
    std::ifstream in(path);
    std::vector<std::string> rows;
    for (std::string line; std::getline(in, line);) {
        rows.push_back(line.substr(0, line.rfind(',')));
    }
    return rows;
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("config text round-trips every field") {
    RunConfig c;
    c.pde = PdeKind::wave;
    c.pde_params = {{"beta", 2.5}};
    c.precision = Format::bf16;
    c.seed = 1234567890123ull;
    c.depth = 2;
    c.width = 17;
    c.nx = 31;
    c.nt = 29;
    c.eval_nx = 101;
    c.eval_nt = 77;
    c.outer_steps = 42;
    c.lbfgs.max_inner_iter = 7;
    c.lbfgs.history_size = 9;
    c.lbfgs.tolerance_grad = 1.25e-11;
    c.lbfgs.tolerance_change = 3e-9;
    c.lbfgs.c1 = 2e-4;
    c.lbfgs.c2 = 0.8;
    c.lbfgs.max_line_search_evals = 13;
    c.lbfgs.line_search_tolerance = 1e-12;
    c.lbfgs.learning_rate = 0.1;
    c.weights = {0.3, 1.0 / 3.0};
    c.phase = {2e-3, 0.01, 0.4};
    c.stall_patience = 5;
    c.checkpoint_every = 0;
    c.output_dir = "some/dir";
    const std::string text = serialize_config(c);
    const RunConfig back = parse_config(text);
    CHECK(back == c);
    CHECK(serialize_config(back) == text);
    CHECK(back.weights.lambda_b == 1.0 / 3.0);
    CHECK(back.seed == 1234567890123ull);
    CHECK(back.pde_params.at("beta") == 2.5);
    CHECK(parse_config(serialize_config(RunConfig{})) == RunConfig{});

    TempDir dir("config");
    save_config(c, dir / "c.ini");
    CHECK(load_config(dir / "c.ini") == c);
}

TEST_CASE("config parsing errors and overrides") {
    const RunConfig c = parse_config("# comment\n[run]\nseed = 5 ; trailing\n\n[problem]\npde = reaction\nrho = 3\n");
    CHECK(c.seed == 5);
    CHECK(c.pde == PdeKind::reaction);
    CHECK(c.pde_params.at("rho") == 3.0);

    const auto message = [](const std::string& text) {
        try {
            parse_config(text);
        } catch (const ConfigError& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    CHECK(message("[run]\nseed = x\n").find("line 2") != std::string::npos);
    CHECK(message("[run]\nbogus = 1\n").find("line 2") != std::string::npos);
    CHECK(message("[nope]\n").find("line 1") != std::string::npos);
    CHECK(message("seed = 1\n").find("line 1") != std::string::npos);
    CHECK(message("[run\n").find("line 1") != std::string::npos);
    CHECK(message("[run]\nprecision = fp8\n").find("line 2") != std::string::npos);

    RunConfig o;
    set_config_value(o, "lbfgs.max_inner_iter", "11");
    set_config_value(o, "width", "9");
    set_config_value(o, "beta", "12");
    set_config_value(o, "problem.beta", "13");
    CHECK(o.lbfgs.max_inner_iter == 11);
    CHECK(o.width == 9);
    CHECK(o.pde_params.at("beta") == 13.0);
    CHECK_THROWS_AS(set_config_value(o, "model.colour", "red"), ConfigError);

    RunConfig bad;
    bad.pde_params = {{"rho", 1.0}};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = {};
    bad.nx = 1;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = {};
    bad.lbfgs.c2 = 1e-5;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = {};
    bad.phase.err_low = 0.5;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("checkpoint bytes round-trip exactly") {
    Checkpoint ck;
    ck.config = tiny_config("x");
    ck.config.precision = Format::fp32;
    ck.precision = Format::fp32;
    ck.outer_step = 123;
    ck.rng_state = {1, 0xFFFFFFFFFFFFFFFFull, 42, 0x0123456789ABCDEFull};
    ck.params = init_mlp(3, 1, 6, kFp32);
    ck.params.flat()[0] = -0.0;
    ck.params.flat()[1] = 5e-324;
    const std::string bytes = encode_checkpoint(ck);
    const Checkpoint back = decode_checkpoint(bytes);
    CHECK(encode_checkpoint(back) == bytes);
    CHECK(back.outer_step == 123);
    CHECK(back.rng_state == ck.rng_state);
    CHECK(back.config == ck.config);
    CHECK(std::signbit(back.params.flat()[0]));
    CHECK(back.params.flat()[1] == 5e-324);

    TempDir dir("ckpt");
    save_checkpoint(ck, dir / "a.ckpt");
    save_checkpoint(load_checkpoint(dir / "a.ckpt"), dir / "b.ckpt");
    CHECK(slurp(dir / "a.ckpt") == slurp(dir / "b.ckpt"));
    CHECK(slurp(dir / "a.ckpt") == bytes);

    CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), CheckpointError);
    CHECK_THROWS_AS(decode_checkpoint("PINNCKPT 9\n"), CheckpointError);
    CHECK_THROWS_AS(decode_checkpoint("garbage"), CheckpointError);
    CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), CheckpointError);
}

TEST_CASE("precision conversion") {
    Checkpoint ck;
    ck.config = tiny_config("x");
    ck.config.precision = Format::fp32;
    ck.precision = Format::fp32;
    ck.params = init_mlp(5, 1, 6, kFp32);
    const Checkpoint wide = convert_precision(ck, Format::fp64);
    CHECK(wide.precision == Format::fp64);
    CHECK(wide.config.precision == Format::fp64);
    for (std::size_t i = 0; i < ck.params.size(); ++i) CHECK(wide.params.flat()[i] == ck.params.flat()[i]);

    Checkpoint dbl = ck;
    dbl.precision = Format::fp64;
    dbl.params = init_mlp(5, 1, 6);
    CHECK_THROWS_AS(convert_precision(dbl, Format::fp32), std::invalid_argument);
    const Checkpoint narrow = convert_precision(dbl, Format::bf16, true);
    for (double v : narrow.params.flat()) CHECK(round_to(kBf16, v) == v);
}

TEST_CASE("zero outer steps leave the initialization untouched") {
    TempDir dir("zero");
    RunConfig c = tiny_config(dir / "run");
    c.outer_steps = 0;
    const auto res = run(c);
    CHECK(res.records.empty());
    const auto init = init_mlp(c.seed, c.depth, c.width);
    CHECK(std::vector<double>(res.final_checkpoint.params.flat().begin(), res.final_checkpoint.params.flat().end()) ==
          std::vector<double>(init.flat().begin(), init.flat().end()));
    CHECK(res.final_checkpoint.outer_step == 0);
    CHECK(slurp(dir / "run/training.csv") == std::string(kTrainingCsvHeader) + "\n");
    CHECK(fs::exists(dir / "run/checkpoint_final.ckpt"));
    CHECK(load_config(dir / "run/config.ini") == c);
}

TEST_CASE("runs are deterministic and write the expected files") {
    TempDir dir("determinism");
    const auto a = run(tiny_config(dir / "a"));
    const auto b = run(tiny_config(dir / "b"));
    REQUIRE(a.records.size() == 3);
    CHECK(csv_without_wall_time(dir / "a/training.csv") == csv_without_wall_time(dir / "b/training.csv"));
    CHECK(payload(slurp(dir / "a/checkpoint_final.ckpt")) == payload(slurp(dir / "b/checkpoint_final.ckpt")));
    CHECK(fs::exists(dir / "a/checkpoint_step_000002.ckpt"));
    CHECK_FALSE(fs::exists(dir / "a/checkpoint_step_000001.ckpt"));

    const auto rows = read_training_csv(dir / "a/training.csv");
    REQUIRE(rows.size() == 3);
    for (std::size_t k = 0; k < rows.size(); ++k) {
        CHECK(rows[k].outer_step == long(k) + 1);
        CHECK(rows[k].loss_total == a.records[k].loss_total);
        CHECK(rows[k].rmae == a.records[k].rmae);
        CHECK(rows[k].phase == a.records[k].phase);
        CHECK(rows[k].stop_reason == a.records[k].stop_reason);
        CHECK(rows[k].loss_total >= 0.0);
        CHECK(rows[k].inner_count <= 4);
    }
    CHECK(a.records.back().loss_total < a.initial_loss);
    std::ifstream in(dir / "a/training.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header ==
          "outer_step,inner_count,stop_reason,loss_total,loss_f,loss_b,rmae,rrmse,grad_inf_norm,param_l2_norm,phase,"
          "wall_seconds");
}

TEST_CASE("resume continues the step count and promotes precision exactly") {
    TempDir dir("resume");
    RunConfig c = tiny_config(dir / "fp32");
    c.precision = Format::fp32;
    c.outer_steps = 2;
    const auto first = run(c);
    const Checkpoint ck = first.final_checkpoint;

    const auto same = resume(ck, Format::fp32, 0, dir / "noop");
    CHECK(same.records.empty());
    CHECK(payload(encode_checkpoint(same.final_checkpoint)) == payload(encode_checkpoint(ck)));
    CHECK(same.final_checkpoint.outer_step == 2);

    const auto more = resume(ck, Format::fp64, 2, dir / "fp64");
    REQUIRE(more.records.size() == 2);
    CHECK(more.records.front().outer_step == 3);
    CHECK(more.final_checkpoint.outer_step == 4);
    CHECK(more.final_checkpoint.precision == Format::fp64);
    CHECK(more.initial_loss ==
          total_loss(ck.params, build_problem(ck.config), make_grid(build_problem(ck.config), c.nx, c.nt), {}, kFp64,
                     false)
              .breakdown.total);
    CHECK_THROWS_AS(resume(more.final_checkpoint, Format::fp32, 1, dir / "narrow"), std::invalid_argument);
    CHECK_NOTHROW(resume(more.final_checkpoint, Format::fp32, 0, dir / "narrow", true));
}

TEST_CASE("evaluation against the reference") {
    const auto problem = PdeProblem::make(PdeKind::convection, {{"beta", 7.0}});
    const auto exact = evaluate_field([](double x, double t) { return std::sin(x - 7.0 * t); }, problem, 21, 11);
    CHECK(exact.rmae == 0.0);
    CHECK(exact.rrmse == 0.0);
    const auto zero = evaluate_field([](double, double) { return 0.0; }, problem, 21, 11);
    CHECK(zero.rmae == 1.0);
    CHECK(zero.rrmse == 1.0);

    TempDir dir("evaluate");
    Checkpoint ck;
    ck.config = tiny_config("x");
    ck.params = MlpParams(1, 6);
    const auto fe = evaluate(ck, 9, 5, dir / "field.csv");
    CHECK(fe.rmae == 1.0);
    std::ifstream in(dir / "field.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header == "x,t,u_pred,u_true");
    int rows = 0;
    for (std::string l; std::getline(in, l);) ++rows;
    CHECK(rows == 45);

    Checkpoint ac = ck;
    ac.config.pde = PdeKind::allen_cahn;
    ac.config.pde_params.clear();
    const auto ac_err = evaluate(ac, 5, 5);
    CHECK(ac_err.rmae == 1.0);
}

TEST_CASE("record formatting round-trips") {
    TrainingRecord r;
    r.outer_step = 7;
    r.inner_count = 3;
    r.stop_reason = StopReason::loss_change_tolerance;
    r.loss_total = 0.1 + 0.2;
    r.loss_f = 1e-300;
    r.loss_b = 2.5;
    r.rmae = 1.0 / 3.0;
    r.rrmse = 0.7;
    r.grad_inf_norm = 3e-8;
    r.param_l2_norm = 12.5;
    r.phase = Phase::failure;
    r.wall_seconds = 1.5;
    TempDir dir("records");
    {
        std::ofstream out(dir / "t.csv");
        out << kTrainingCsvHeader << '\n' << format_record(r) << '\n';
    }
    const auto back = read_training_csv(dir / "t.csv");
    REQUIRE(back.size() == 1);
    CHECK(back[0].loss_total == r.loss_total);
    CHECK(back[0].loss_f == r.loss_f);
    CHECK(back[0].rmae == r.rmae);
    CHECK(back[0].stop_reason == r.stop_reason);
    CHECK(back[0].phase == r.phase);
    CHECK(format_record(back[0]) == format_record(r));
}

TEST_CASE("sweeps run every cell and record failures") {
    TempDir dir("sweep");
    RunConfig base = tiny_config(dir / "sweep");
    base.outer_steps = 2;
    const auto cells = sweep(base, {Format::fp64}, {{{"beta", 4.0}}});
    REQUIRE(cells.size() == 1);
    CHECK(cells[0].ok);
    RunConfig single = tiny_config(dir / "single");
    single.outer_steps = 2;
    const auto direct = run(single, RunOptions{false, {}});
    CHECK(cells[0].final_loss == direct.records.back().loss_total);
    CHECK(cells[0].final_rmae == direct.records.back().rmae);
    CHECK(fs::exists(dir / "sweep/summary.csv"));

    const auto mixed = sweep(base, {Format::fp32, Format::fp64}, {{{"beta", 4.0}}, {{"rho", 1.0}}}, 2);
    REQUIRE(mixed.size() == 4);
    int failed = 0;
    for (const auto& cell : mixed) {
        if (!cell.ok) {
            ++failed;
            CHECK_FALSE(cell.error.empty());
        }
    }
    CHECK(failed == 2);
    CHECK_THROWS_AS(sweep(base, {}, {{}}), std::invalid_argument);
}

}  // TEST_SUITE

#include "pinnlab/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "pinnlab/allen_cahn.hpp"
#include "pinnlab/csv.hpp"

namespace pinnlab {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

double to_double(std::string_view s) {
    s = trim(s);
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw ConfigError("expected a number, got '" + std::string(s) + "'");
    }
    return v;
}

template <typename I>
I to_integer(std::string_view s) {
    s = trim(s);
    I v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw ConfigError("expected an integer, got '" + std::string(s) + "'");
    }
    return v;
}

struct Field {
    std::string_view section;
    std::string_view key;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, std::string_view)> set;
};

template <typename M>
Field real(std::string_view section, std::string_view key, M member) {
    return {section, key, [member](const RunConfig& c) { return format_double(member(const_cast<RunConfig&>(c))); },
            [member](RunConfig& c, std::string_view v) { member(c) = to_double(v); }};
}

template <typename M>
Field integer(std::string_view section, std::string_view key, M member) {
    return {section, key, [member](const RunConfig& c) { return std::to_string(member(const_cast<RunConfig&>(c))); },
            [member](RunConfig& c, std::string_view v) {
                auto& ref = member(c);
                ref = to_integer<std::remove_reference_t<decltype(ref)>>(v);
            }};
}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = {
        {"run", "precision", [](const RunConfig& c) { return std::string(to_string(c.precision)); },
         [](RunConfig& c, std::string_view v) {
             try {
                 c.precision = parse_format(trim(v));
             } catch (const std::invalid_argument& e) {
                 throw ConfigError(e.what());
             }
         }},
        integer("run", "seed", [](RunConfig& c) -> auto& { return c.seed; }),
        integer("run", "outer_steps", [](RunConfig& c) -> auto& { return c.outer_steps; }),
        {"run", "output_dir", [](const RunConfig& c) { return c.output_dir; },
         [](RunConfig& c, std::string_view v) { c.output_dir = std::string(trim(v)); }},
        integer("run", "stall_patience", [](RunConfig& c) -> auto& { return c.stall_patience; }),
        integer("run", "checkpoint_every", [](RunConfig& c) -> auto& { return c.checkpoint_every; }),
        {"problem", "pde", [](const RunConfig& c) { return std::string(to_string(c.pde)); },
         [](RunConfig& c, std::string_view v) {
             try {
                 c.pde = parse_pde(trim(v));
             } catch (const std::invalid_argument& e) {
                 throw ConfigError(e.what());
             }
         }},
        integer("model", "depth", [](RunConfig& c) -> auto& { return c.depth; }),
        integer("model", "width", [](RunConfig& c) -> auto& { return c.width; }),
        integer("grid", "nx", [](RunConfig& c) -> auto& { return c.nx; }),
        integer("grid", "nt", [](RunConfig& c) -> auto& { return c.nt; }),
        integer("grid", "eval_nx", [](RunConfig& c) -> auto& { return c.eval_nx; }),
        integer("grid", "eval_nt", [](RunConfig& c) -> auto& { return c.eval_nt; }),
        real("loss", "lambda_f", [](RunConfig& c) -> auto& { return c.weights.lambda_f; }),
        real("loss", "lambda_b", [](RunConfig& c) -> auto& { return c.weights.lambda_b; }),
        integer("lbfgs", "max_inner_iter", [](RunConfig& c) -> auto& { return c.lbfgs.max_inner_iter; }),
        integer("lbfgs", "history_size", [](RunConfig& c) -> auto& { return c.lbfgs.history_size; }),
        real("lbfgs", "tolerance_grad", [](RunConfig& c) -> auto& { return c.lbfgs.tolerance_grad; }),
        real("lbfgs", "tolerance_change", [](RunConfig& c) -> auto& { return c.lbfgs.tolerance_change; }),
        real("lbfgs", "c1", [](RunConfig& c) -> auto& { return c.lbfgs.c1; }),
        real("lbfgs", "c2", [](RunConfig& c) -> auto& { return c.lbfgs.c2; }),
        integer("lbfgs", "max_line_search_evals", [](RunConfig& c) -> auto& { return c.lbfgs.max_line_search_evals; }),
        real("lbfgs", "line_search_tolerance", [](RunConfig& c) -> auto& { return c.lbfgs.line_search_tolerance; }),
        real("lbfgs", "learning_rate", [](RunConfig& c) -> auto& { return c.lbfgs.learning_rate; }),
        real("phase", "loss_low", [](RunConfig& c) -> auto& { return c.phase.loss_low; }),
        real("phase", "err_low", [](RunConfig& c) -> auto& { return c.phase.err_low; }),
        real("phase", "err_high", [](RunConfig& c) -> auto& { return c.phase.err_high; }),
    };
    return table;
}

void set_field(RunConfig& c, std::string_view section, std::string_view key, std::string_view value) {
    for (const auto& f : fields()) {
        if (f.section == section && f.key == key) {
            f.set(c, value);
            return;
        }
    }
    if (section == "problem") {
        c.pde_params[std::string(key)] = to_double(value);
        return;
    }
    throw ConfigError("unknown config key '" + std::string(section) + "." + std::string(key) + "'");
}

}  // namespace

void RunConfig::validate() const {
    const auto require = [](bool ok, const char* what) {
        if (!ok) {
            throw std::invalid_argument(std::string("config: ") + what);
        }
    };
    require(depth >= 1 && width >= 1, "depth and width must be >= 1");
    require(nx >= 2 && nt >= 2, "grid needs nx, nt >= 2");
    require(eval_nx == 0 || eval_nx >= 2, "eval_nx must be 0 or >= 2");
    require(eval_nt == 0 || eval_nt >= 2, "eval_nt must be 0 or >= 2");
    require(outer_steps >= 0, "outer_steps must be >= 0");
    require(stall_patience >= 0 && checkpoint_every >= 0, "stall_patience and checkpoint_every must be >= 0");
    require(weights.lambda_f >= 0.0 && weights.lambda_b >= 0.0, "loss weights must be >= 0");
    require(!output_dir.empty(), "output_dir must not be empty");
    phase.validate();
    LbfgsState probe(lbfgs);  // validates the optimizer fields
    (void)PdeProblem::make(pde, pde_params);
}

std::string serialize_config(const RunConfig& c) {
    std::ostringstream out;
    std::string_view section;
    for (const auto& f : fields()) {
        if (f.section != section) {
            if (!section.empty()) {
                out << '\n';
            }
            section = f.section;
            out << '[' << section << "]\n";
        }
        out << f.key << " = " << f.get(c) << '\n';
        if (f.section == "problem" && f.key == "pde") {
            for (const auto& [name, value] : c.pde_params) {
                out << name << " = " << format_double(value) << '\n';
            }
        }
    }
    return out.str();
}

RunConfig parse_config(std::string_view text) {
    RunConfig c;
    std::string section;
    int lineno = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto end = std::min(text.find('\n', pos), text.size());
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++lineno;
        if (const auto hash = line.find_first_of("#;"); hash != std::string_view::npos) {
            line = line.substr(0, hash);
        }
        line = trim(line);
        if (line.empty()) {
            if (end == text.size()) break;
            continue;
        }
        try {
            if (line.front() == '[') {
                if (line.back() != ']') {
                    throw ConfigError("unterminated section header");
                }
                section = std::string(trim(line.substr(1, line.size() - 2)));
                bool known = false;
                for (const auto& f : fields()) {
                    known |= f.section == section;
                }
                if (!known) {
                    throw ConfigError("unknown section [" + section + "]");
                }
            } else {
                const auto eq = line.find('=');
                if (eq == std::string_view::npos) {
                    throw ConfigError("expected key = value");
                }
                if (section.empty()) {
                    throw ConfigError("key outside of any section");
                }
                set_field(c, section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
            }
        } catch (const ConfigError& e) {
            throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
        }
        if (end == text.size()) break;
    }
    return c;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot open config '" + path + "'");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

void save_config(const RunConfig& config, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot open '" + path + "' for writing");
    }
    out << serialize_config(config);
}

void set_config_value(RunConfig& config, std::string_view dotted_key, std::string_view value) {
    const auto dot = dotted_key.find('.');
    if (dot != std::string_view::npos) {
        set_field(config, dotted_key.substr(0, dot), dotted_key.substr(dot + 1), value);
        return;
    }
    for (const auto& f : fields()) {
        if (f.key == dotted_key) {
            f.set(config, value);
            return;
        }
    }
    set_field(config, "problem", dotted_key, value);
}

PdeProblem build_problem(const RunConfig& config) {
    PdeProblem problem = PdeProblem::make(config.pde, config.pde_params);
    if (config.pde == PdeKind::allen_cahn) {
        problem.attach_reference(std::make_shared<const AllenCahnReference>(AllenCahnReference::solve()));
    }
    return problem;
}

bool operator==(const RunConfig& a, const RunConfig& b) { return serialize_config(a) == serialize_config(b); }

}  // namespace pinnlab

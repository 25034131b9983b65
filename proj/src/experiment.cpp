#include "freshma/experiment.hpp"

#include "freshma/aoii_exact.hpp"
#include "freshma/cra.hpp"
#include "freshma/meanfield.hpp"
#include "freshma/peak_fd.hpp"
#include "freshma/peak_td.hpp"
#include "freshma/peak_xd.hpp"
#include "freshma/simulator.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <limits>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

namespace freshma {

namespace {

using Params = std::map<std::string, double>;
using Metrics = std::vector<std::pair<std::string, Cell>>;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const std::set<std::string> kIntegerParams = {"M", "N", "c", "R", "Z1", "Z2", "K", "N1", "N2",
                                              "imax", "q0max", "slots", "warmup", "seed", "batches"};
const std::set<std::string> kAllParams = {"M", "N", "c", "lambda", "R", "Z1", "Z2", "K", "w1", "N1", "N2",
                                          "imax", "q0max", "eps", "slots", "warmup", "seed", "batches"};
const std::vector<std::string> kSimSchemes = {"polling", "aloha", "tree", "td", "fd", "xd", "meanfield-aoii", "meanfield-peak"};

Params aoii_params(const std::string& scheme) {
    Params p{{"M", 2}, {"N", 10}, {"c", 3}, {"lambda", 0.1}};
    if (scheme == "tree") p["R"] = 3;
    return p;
}
Params td_params() { return {{"Z1", 3}, {"Z2", 1}, {"c", 3}, {"N", 5}, {"R", 3}, {"lambda", 0.1}}; }
Params fd_params() { return {{"K", 1}, {"c", 3}, {"lambda", 0.1}, {"w1", 0.5}, {"N1", 12}, {"N2", 12}}; }
Params xd_params() {
    return {{"M", 3}, {"N2", 1}, {"c", 3}, {"lambda", 0.1}, {"imax", 2}, {"q0max", 10}, {"eps", 1e-6}};
}
Params mf_params(bool peak) {
    Params p{{"M", 100}, {"lambda", 0.2}, {"c", 3}};
    if (peak) p["N"] = 0;
    return p;
}

Params scheme_params(const std::string& scheme) {
    if (scheme == "polling" || scheme == "aloha" || scheme == "tree") return aoii_params(scheme);
    if (scheme == "td") return td_params();
    if (scheme == "fd") return fd_params();
    if (scheme == "xd") return xd_params();
    if (scheme == "meanfield-aoii") return mf_params(false);
    if (scheme == "meanfield-peak") return mf_params(true);
    throw ConfigError("unknown scheme '" + scheme + "'");
}

std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += '"';
        out += ch;
    }
    return out + "\"";
}

std::string cell_text(const Cell& c) {
    if (auto d = std::get_if<double>(&c)) return fmt(*d);
    if (auto i = std::get_if<long long>(&c)) return std::to_string(*i);
    return csv_escape(std::get<std::string>(c));
}

int as_int(const Params& p, const char* k) { return static_cast<int>(std::llround(p.at(k))); }

// ---------------------------------------------------------------- analytic side

AoiiChain aoii_chain(const std::string& scheme, const Params& p) {
    const int M = as_int(p, "M"), N = as_int(p, "N"), c = as_int(p, "c");
    const double lambda = p.at("lambda");
    if (scheme == "polling") return build_polling_aoii_chain(M, N, c, lambda);
    const CraSpec cra = scheme == "tree" ? tree_splitting_cra(M, as_int(p, "R")) : aloha_cra(M);
    return build_ra_aoii_chain(M, N, c, lambda, cra);
}

TdFrame td_frame(const Params& p) { return TdFrame{as_int(p, "Z1"), as_int(p, "Z2"), as_int(p, "c")}; }

FdParams fd_of(const Params& p) {
    FdParams f;
    f.K = as_int(p, "K");
    f.c = as_int(p, "c");
    f.lambda = p.at("lambda");
    if (p.count("w1")) f.w1 = p.at("w1");
    f.N1 = as_int(p, "N1");
    f.N2 = as_int(p, "N2");
    return f;
}

XdParams xd_of(const Params& p) {
    XdParams x;
    x.M = as_int(p, "M");
    x.N2 = as_int(p, "N2");
    x.c = as_int(p, "c");
    x.lambda = p.at("lambda");
    x.i_max = as_int(p, "imax");
    x.Q0max = as_int(p, "q0max");
    return x;
}

ValueIterationOptions vi_of(const Params& p) {
    ValueIterationOptions o;
    o.eps = p.at("eps");
    return o;
}

std::string with_suffix(const std::string& path, std::size_t index, bool sweeping) {
    if (!sweeping) return path;
    const auto dot = path.find_last_of('.');
    const auto slash = path.find_last_of('/');
    const std::string tag = "_" + std::to_string(index);
    if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) return path + tag;
    return path.substr(0, dot) + tag + path.substr(dot);
}

void write_policy(const std::string& path, const XdPolicyTable& t) {
    nlohmann::ordered_json j;
    const auto& p = t.params;
    j["params"] = {{"M", p.M}, {"N2", p.N2}, {"c", p.c}, {"lambda", p.lambda}, {"imax", p.i_max}, {"q0max", p.Q0max}};
    auto rows = nlohmann::ordered_json::array();
    for (std::size_t k = 0; k < t.states.size(); ++k) {
        const auto& s = t.states[k];
        rows.push_back({{"td", s.td}, {"interval", s.interval}, {"q0", s.q0}, {"q1", s.q1}, {"q2", s.q2},
                        {"q3", s.q3}, {"s", s.s}, {"w1", action_w1(t.action[k])}});
    }
    j["states"] = std::move(rows);
    std::ofstream f(path);
    if (!f) throw ConfigError("cannot write policy file '" + path + "'");
    f << j.dump(1) << '\n';
}

// Metrics shared by the analytic and simulated halves of a comparison.
struct Summary {
    std::string primary;
    double value = kNaN, half_width = 0.0;
    double avg_aoii = kNaN, peak_aoii = kNaN, cost = kNaN, loss_rate = kNaN, mean_q1 = kNaN, mean_q2 = kNaN;
    std::string warning;
};

std::string primary_of(const std::string& scheme) {
    if (scheme == "polling" || scheme == "aloha" || scheme == "tree" || scheme == "meanfield-aoii") return "avg_aoii";
    if (scheme == "xd") return "cost";
    return "peak_aoii";
}

double pick(const Summary& s) {
    if (s.primary == "avg_aoii") return s.avg_aoii;
    if (s.primary == "cost") return s.cost;
    return s.peak_aoii;
}

Summary analytic_summary(const std::string& scheme, const Params& p) {
    Summary s;
    s.primary = primary_of(scheme);
    try {
        if (scheme == "polling" || scheme == "aloha" || scheme == "tree") {
            s.avg_aoii = average_aoii(aoii_chain(scheme, p));
        } else if (scheme == "td") {
            auto t = analyze_td(td_frame(p), as_int(p, "N"), as_int(p, "R"), p.at("lambda"));
            s.peak_aoii = t.peak_aoii;
            s.loss_rate = t.loss_rate;
            s.mean_q1 = t.mean_q1;
            s.mean_q2 = t.mean_q2;
        } else if (scheme == "fd") {
            const auto f = fd_of(p);
            auto r = fd_evaluate(f, false);
            s.peak_aoii = r.peak_aoii;
            s.loss_rate = r.loss_rate;
            s.mean_q1 = r.mean_q1;
            s.mean_q2 = r.mean_q2;
            if (!r.stable) s.warning = "unstable: lambda >= K/(e + K c) or w1 outside the stable interval";
        } else if (scheme == "xd") {
            auto r = solve_xd(xd_of(p), vi_of(p));
            s.cost = r.L_policy;
            s.peak_aoii = r.peak_aoii;
            s.loss_rate = r.loss_rate;
            s.mean_q1 = r.mean_q1;
            s.mean_q2 = r.mean_q2;
        } else if (scheme == "meanfield-aoii") {
            s.avg_aoii = mf_aoii_closed_form(as_int(p, "M"), p.at("lambda"), as_int(p, "c")).avg_aoii;
        } else {
            MfPeakModel m;
            m.M = as_int(p, "M");
            m.lambda = p.at("lambda");
            m.c = as_int(p, "c");
            m.N = as_int(p, "N");
            s.peak_aoii = mf_peak_fixed_point(m).peak_aoii;
        }
    } catch (const InfeasibleParameters& e) {
        s.warning = e.what();
    }
    s.value = pick(s);
    return s;
}

SimConfig sim_config(const std::string& scheme, const Params& p) {
    SimConfig c;
    if (scheme == "polling") c.scheme = SimScheme::PollingAoii;
    else if (scheme == "aloha") c.scheme = SimScheme::AlohaAoii;
    else if (scheme == "tree") c.scheme = SimScheme::TreeAoii;
    else if (scheme == "td") c.scheme = SimScheme::TdPeak;
    else if (scheme == "fd") c.scheme = SimScheme::FdPeak;
    else if (scheme == "xd") c.scheme = SimScheme::XdPolicy;
    else c.scheme = SimScheme::MeanfieldReference;
    c.peak_mode = scheme == "meanfield-peak";
    c.lambda = p.at("lambda");
    auto set = [&](const char* k, int& field) {
        if (p.count(k)) field = as_int(p, k);
    };
    set("M", c.M);
    set("N", c.N);
    set("c", c.c);
    set("R", c.R);
    set("Z1", c.Z1);
    set("Z2", c.Z2);
    set("K", c.K);
    set("N1", c.N1);
    set("N2", c.N2);
    set("batches", c.batches);
    if (p.count("w1")) c.w1 = p.at("w1");
    c.horizon_slots = std::llround(p.at("slots"));
    c.warmup_slots = std::llround(p.at("warmup"));
    c.seed = static_cast<std::uint64_t>(std::llround(p.at("seed")));
    if (scheme == "xd") {
        auto mdp = build_xd_mdp(xd_of(p));
        auto vi = value_iteration(mdp.mdp, vi_of(p));
        c.policy = std::make_shared<XdPolicyTable>(xd_policy_table(mdp, vi));
    }
    return c;
}

std::string sim_warning(const std::string& scheme, const Params& p, const SimMetrics& m) {
    std::string w;
    auto add = [&](const std::string& s) { w += (w.empty() ? "" : "; ") + s; };
    if (scheme == "fd" && !fd_is_stable(fd_of(p))) add("unstable: lambda >= K/(e + K c) or w1 outside the stable interval");
    if (m.diverging) add("occupancy trending upward; system may be unstable");
    if (m.untabulated > 0) add(std::to_string(m.untabulated) + " slots in states missing from the policy");
    return w;
}

Summary simulated_summary(const std::string& scheme, const Params& p, const SimMetrics& m) {
    Summary s;
    s.primary = primary_of(scheme);
    s.avg_aoii = s.primary == "avg_aoii" ? m.avg_aoii.value : kNaN;
    s.peak_aoii = m.avg_peak_aoii.value;
    s.cost = scheme == "xd" ? m.cost.value : kNaN;
    s.loss_rate = m.loss_rate.value;
    s.mean_q1 = m.mean_q1.value;
    s.mean_q2 = m.mean_q2.value;
    if (s.primary == "avg_aoii") {
        s.value = m.avg_aoii.value;
        s.half_width = m.avg_aoii.half_width;
    } else if (s.primary == "cost") {
        s.value = m.cost.value;
        s.half_width = m.cost.half_width;
    } else {
        s.value = m.avg_peak_aoii.value;
        s.half_width = m.avg_peak_aoii.half_width;
    }
    s.warning = sim_warning(scheme, p, m);
    return s;
}

Metrics summary_metrics(const char* method, const Summary& s) {
    return {{"method", std::string(method)},
            {"primary", s.primary},
            {"value", s.value},
            {"half_width", s.half_width},
            {"avg_aoii", s.avg_aoii},
            {"peak_aoii", s.peak_aoii},
            {"cost", s.cost},
            {"loss_rate", s.loss_rate},
            {"mean_q1", s.mean_q1},
            {"mean_q2", s.mean_q2},
            {"warning", s.warning}};
}

// ---------------------------------------------------------------- per-point runs

std::vector<Metrics> run_point(const ExperimentSpec& spec, const Params& p, std::size_t index) {
    const auto& cmd = spec.command;
    if (cmd == "analyze" && spec.target == "aoii") {
        Metrics m{{"method", std::string("analytic")}};
        try {
            auto chain = aoii_chain(spec.scheme, p);
            auto pi = solve_aoii_chain(chain);
            m.push_back({"avg_aoii", average_aoii(chain, pi)});
            m.push_back({"states", static_cast<long long>(chain.matrix.dimension())});
            m.push_back({"residual", pi.residual});
            m.push_back({"warning", std::string()});
        } catch (const InfeasibleParameters& e) {
            m.insert(m.end(), {{"avg_aoii", kNaN}, {"states", 0LL}, {"residual", kNaN}, {"warning", std::string(e.what())}});
        }
        return {m};
    }
    if (cmd == "analyze") {
        Metrics m{{"method", std::string("analytic")}};
        if (spec.scheme == "td") {
            auto t = analyze_td(td_frame(p), as_int(p, "N"), as_int(p, "R"), p.at("lambda"));
            m.insert(m.end(), {{"peak_aoii", t.peak_aoii}, {"L_bar", t.L_bar}, {"lambda_eff", t.lambda_eff},
                               {"loss_rate", t.loss_rate}, {"mean_q1", t.mean_q1}, {"mean_q2", t.mean_q2},
                               {"residual", t.residual}, {"warning", std::string()}});
        } else {
            auto r = fd_evaluate(fd_of(p), true);
            m.insert(m.end(), {{"peak_aoii", r.peak_aoii}, {"derivative", r.derivative}, {"L_bar", r.L_bar},
                               {"lambda_eff", r.lambda_eff}, {"loss_rate", r.loss_rate}, {"mean_q1", r.mean_q1},
                               {"mean_q2", r.mean_q2}, {"residual", r.residual},
                               {"warning", std::string(r.stable ? "" : "unstable: lambda >= K/(e + K c) or w1 outside the stable interval")}});
        }
        return {m};
    }
    if (cmd == "optimize") {
        auto o = optimize_fd_bandwidth(fd_of(p), p.at("eps"));
        return {{{"method", std::string("analytic")},
                 {"w1_opt", o.w1},
                 {"lower", o.lower},
                 {"upper", o.upper},
                 {"peak_aoii", o.peak_aoii},
                 {"used_fallback", static_cast<long long>(o.used_fallback)},
                 {"evaluations", static_cast<long long>(o.evaluations)}}};
    }
    if (cmd == "solve") {
        auto mdp = build_xd_mdp(xd_of(p));
        auto r = solve_xd(mdp, vi_of(p));
        if (!spec.policy_out.empty())
            write_policy(with_suffix(spec.policy_out, index, !spec.sweep_param.empty()), xd_policy_table(mdp, r.vi));
        return {{{"method", std::string("analytic")},
                 {"L_eps", r.L_eps},
                 {"L_policy", r.L_policy},
                 {"peak_aoii", r.peak_aoii},
                 {"lambda_eff", r.lambda_eff},
                 {"loss_rate", r.loss_rate},
                 {"mean_q1", r.mean_q1},
                 {"mean_q2", r.mean_q2},
                 {"span", r.vi.span_at_stop},
                 {"iterations", static_cast<long long>(r.vi.iterations)},
                 {"states", static_cast<long long>(r.num_states)},
                 {"cap_mass", r.cap_mass}}};
    }
    if (cmd == "meanfield") {
        const int M = as_int(p, "M"), c = as_int(p, "c");
        const double lambda = p.at("lambda");
        Metrics m{{"method", std::string("analytic")}};
        try {
            if (spec.target == "aoii") {
                auto r = mf_aoii_closed_form(M, lambda, c);
                m.insert(m.end(), {{"avg_aoii", r.avg_aoii}, {"alpha", r.alpha}, {"pi1", r.pi1}, {"eta", r.eta},
                                   {"warning", std::string()}});
            } else {
                MfPeakModel mp;
                mp.M = M;
                mp.lambda = lambda;
                mp.c = c;
                mp.N = as_int(p, "N");
                auto r = mf_peak_fixed_point(mp);
                m.insert(m.end(), {{"peak_aoii", r.peak_aoii}, {"alpha", r.alpha}, {"h_bar", r.h_bar}, {"eta", r.eta},
                                   {"buffer", static_cast<long long>(r.N)}, {"iterations", static_cast<long long>(r.iterations)},
                                   {"warning", std::string(r.saturated ? "reservation success probability clipped at 1" : "")}});
            }
        } catch (const InfeasibleParameters& e) {
            if (spec.target == "aoii")
                m.insert(m.end(), {{"avg_aoii", kNaN}, {"alpha", kNaN}, {"pi1", kNaN}, {"eta", kNaN}, {"warning", std::string(e.what())}});
            else
                m.insert(m.end(), {{"peak_aoii", kNaN}, {"alpha", kNaN}, {"h_bar", kNaN}, {"eta", kNaN}, {"buffer", 0LL},
                                   {"iterations", 0LL}, {"warning", std::string(e.what())}});
        }
        return {m};
    }
    const auto sm = simulate(sim_config(spec.scheme, p));
    if (cmd == "simulate") {
        auto est = [](const Estimate& e) { return std::make_pair(e.value, e.half_width); };
        Metrics m{{"method", std::string("simulated")}};
        const bool aoii = primary_of(spec.scheme) == "avg_aoii";
        for (auto [name, e] : {std::make_pair("avg_aoii", est(sm.avg_aoii)), std::make_pair("peak_aoii", est(sm.avg_peak_aoii)),
                               std::make_pair("cost", est(sm.cost)), std::make_pair("loss_rate", est(sm.loss_rate)),
                               std::make_pair("mean_q1", est(sm.mean_q1)), std::make_pair("mean_q2", est(sm.mean_q2)),
                               std::make_pair("occupancy", est(sm.occupancy)), std::make_pair("throughput", est(sm.throughput))}) {
            const bool applies = (std::string(name) != "avg_aoii" || aoii) && (std::string(name) != "cost" || spec.scheme == "xd");
            m.push_back({name, applies ? e.first : kNaN});
            m.push_back({std::string(name) + "_hw", applies ? e.second : kNaN});
        }
        m.push_back({"little_error", little_consistency(sm)});
        m.push_back({"deliveries", sm.deliveries});
        m.push_back({"diverging", static_cast<long long>(sm.diverging)});
        m.push_back({"warning", sim_warning(spec.scheme, p, sm)});
        return {m};
    }
    // compare: analytic row first, then the simulated row for the same point
    return {summary_metrics("analytic", analytic_summary(spec.scheme, p)),
            summary_metrics("simulated", simulated_summary(spec.scheme, p, sm))};
}

std::size_t line_of(const std::string& text, std::size_t byte) {
    byte = std::min(byte, text.size());
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte ? byte - 1 : 0), '\n'));
}

}  // namespace

std::map<std::string, double> parameter_defaults(const ExperimentSpec& s) {
    const auto& cmd = s.command;
    if (cmd == "analyze") {
        if (s.target == "aoii") {
            if (s.scheme != "polling" && s.scheme != "aloha" && s.scheme != "tree")
                throw ConfigError("analyze aoii: scheme must be polling, aloha or tree (got '" + s.scheme + "')");
            return aoii_params(s.scheme);
        }
        if (s.target == "peak") {
            if (s.scheme == "td") return td_params();
            if (s.scheme == "fd") return fd_params();
            throw ConfigError("analyze peak: scheme must be td or fd (got '" + s.scheme + "')");
        }
        throw ConfigError("analyze: target must be aoii or peak (got '" + s.target + "')");
    }
    if (cmd == "optimize") {
        if (s.target != "fd") throw ConfigError("optimize: target must be fd (got '" + s.target + "')");
        Params p = fd_params();
        p.erase("w1");
        p["eps"] = 1e-4;
        return p;
    }
    if (cmd == "solve") {
        if (s.target != "xd") throw ConfigError("solve: target must be xd (got '" + s.target + "')");
        return xd_params();
    }
    if (cmd == "meanfield") {
        if (s.target != "aoii" && s.target != "peak") throw ConfigError("meanfield: mode must be aoii or peak (got '" + s.target + "')");
        return mf_params(s.target == "peak");
    }
    if (cmd == "simulate" || cmd == "compare") {
        if (std::find(kSimSchemes.begin(), kSimSchemes.end(), s.scheme) == kSimSchemes.end())
            throw ConfigError(cmd + ": unknown scheme '" + s.scheme + "'");
        Params p = scheme_params(s.scheme);
        p.insert({{"slots", 1e6}, {"warmup", 1e5}, {"seed", 1}, {"batches", 20}});
        return p;
    }
    throw ConfigError("unknown command '" + cmd + "'");
}

ExperimentSpec normalized(const ExperimentSpec& spec) {
    ExperimentSpec out = spec;
    auto defaults = parameter_defaults(spec);
    auto where = spec.command + (spec.target.empty() ? "" : " " + spec.target) + (spec.scheme.empty() ? "" : " (" + spec.scheme + ")");
    if ((spec.command == "optimize" || spec.command == "solve" || spec.command == "meanfield") && !spec.scheme.empty())
        throw ConfigError(where + ": scheme does not apply");
    auto check_value = [&](const std::string& k, double v) {
        if (!std::isfinite(v)) throw ConfigError("parameter '" + k + "' must be finite");
        if (kIntegerParams.count(k) && v != std::floor(v)) throw ConfigError("parameter '" + k + "' must be an integer");
    };
    for (const auto& [k, v] : spec.params) {
        if (!defaults.count(k)) throw ConfigError("parameter '" + k + "' does not apply to " + where);
        check_value(k, v);
        defaults[k] = v;
    }
    out.params = defaults;
    if (!spec.sweep_param.empty() || !spec.sweep_values.empty()) {
        if (!defaults.count(spec.sweep_param))
            throw ConfigError("sweep parameter '" + spec.sweep_param + "' does not apply to " + where);
        if (spec.sweep_values.empty()) throw ConfigError("sweep.values must not be empty");
        for (double v : spec.sweep_values) check_value(spec.sweep_param, v);
    }
    if (spec.format != "csv" && spec.format != "json") throw ConfigError("format must be csv or json (got '" + spec.format + "')");
    if (spec.workers < 0) throw ConfigError("workers must be non-negative");
    if (!spec.policy_out.empty() && spec.command != "solve") throw ConfigError("policy-out applies to solve xd only");
    return out;
}

// ---------------------------------------------------------------- configuration files

ExperimentSpec parse_config_text(const std::string& text) {
    if (text.find_first_not_of(" \t\r\n") == std::string::npos)
        throw ConfigError("configuration is empty; expected an object with at least a 'command' key");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("configuration parse error at line " + std::to_string(line_of(text, e.byte)) + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError("configuration must be an object");
    static const std::set<std::string> reserved = {"command", "target", "mode", "scheme", "sweep", "output", "format", "policy-out", "workers"};
    std::vector<std::string> unknown;
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!reserved.count(it.key()) && !kAllParams.count(it.key())) unknown.push_back(it.key());
    if (!unknown.empty()) {
        std::string list;
        for (const auto& k : unknown) list += (list.empty() ? "" : ", ") + k;
        throw ConfigError("unknown configuration keys: " + list);
    }
    auto str = [&](const char* key) -> std::string {
        if (!j.contains(key)) return {};
        if (!j[key].is_string()) throw ConfigError(std::string(key) + ": expected a string");
        return j[key].get<std::string>();
    };
    ExperimentSpec s;
    s.command = str("command");
    if (s.command.empty()) throw ConfigError("command: missing");
    if (j.contains("mode") && s.command != "meanfield") throw ConfigError("mode: applies to the meanfield command only (use target)");
    if (j.contains("target") && s.command == "meanfield") throw ConfigError("target: the meanfield command uses mode");
    s.target = s.command == "meanfield" ? str("mode") : str("target");
    s.scheme = str("scheme");
    s.output = str("output");
    if (j.contains("format")) s.format = str("format");
    s.policy_out = str("policy-out");
    if (j.contains("workers")) {
        if (!j["workers"].is_number_integer()) throw ConfigError("workers: expected an integer");
        s.workers = j["workers"].get<int>();
    }
    for (const auto& k : kAllParams)
        if (j.contains(k)) {
            if (!j[k].is_number()) throw ConfigError(k + ": expected a number");
            s.params[k] = j[k].get<double>();
        }
    if (j.contains("sweep")) {
        const auto& sw = j["sweep"];
        if (!sw.is_object()) throw ConfigError("sweep: expected an object with 'param' and 'values'");
        for (auto it = sw.begin(); it != sw.end(); ++it)
            if (it.key() != "param" && it.key() != "values") throw ConfigError("unknown configuration keys: sweep." + it.key());
        if (!sw.contains("param") || !sw["param"].is_string()) throw ConfigError("sweep.param: expected a string");
        if (!sw.contains("values") || !sw["values"].is_array()) throw ConfigError("sweep.values: expected an array");
        s.sweep_param = sw["param"].get<std::string>();
        for (std::size_t i = 0; i < sw["values"].size(); ++i) {
            if (!sw["values"][i].is_number()) throw ConfigError("sweep.values[" + std::to_string(i) + "]: expected a number");
            s.sweep_values.push_back(sw["values"][i].get<double>());
        }
    }
    normalized(s);  // schema check; the stored spec keeps only what was given
    return s;
}

ExperimentSpec load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open configuration file '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config_text(ss.str());
}

std::string to_config_text(const ExperimentSpec& s) {
    nlohmann::ordered_json j;
    j["command"] = s.command;
    if (!s.target.empty()) j[s.command == "meanfield" ? "mode" : "target"] = s.target;
    if (!s.scheme.empty()) j["scheme"] = s.scheme;
    for (const auto& [k, v] : s.params) {
        if (kIntegerParams.count(k)) j[k] = std::llround(v);
        else j[k] = v;
    }
    if (!s.sweep_param.empty()) j["sweep"] = {{"param", s.sweep_param}, {"values", s.sweep_values}};
    if (!s.output.empty()) j["output"] = s.output;
    if (s.format != "csv") j["format"] = s.format;
    if (!s.policy_out.empty()) j["policy-out"] = s.policy_out;
    if (s.workers != 0) j["workers"] = s.workers;
    return j.dump(2) + "\n";
}

// ---------------------------------------------------------------- execution and output

int worker_count(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("FRESHMA_WORKERS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) return static_cast<int>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<ResultRow> run_experiment(const ExperimentSpec& spec) {
    const ExperimentSpec s = normalized(spec);
    const bool sweeping = !s.sweep_param.empty();
    const std::size_t points = sweeping ? s.sweep_values.size() : 1;
    std::vector<Params> params(points, s.params);
    if (sweeping)
        for (std::size_t i = 0; i < points; ++i) params[i][s.sweep_param] = s.sweep_values[i];

    std::vector<std::vector<Metrics>> results(points);
    std::vector<std::exception_ptr> errors(points);
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i; (i = next++) < points;) {
            try {
                results[i] = run_point(s, params[i], i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const int n = std::min<int>(worker_count(s.workers), static_cast<int>(points));
    std::vector<std::thread> pool;
    for (int w = 1; w < n; ++w) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);

    std::vector<ResultRow> rows;
    for (std::size_t i = 0; i < points; ++i)
        for (auto& m : results[i]) rows.push_back({params[i], std::move(m)});
    return rows;
}

std::string to_csv(const std::vector<ResultRow>& rows) {
    std::ostringstream os;
    if (rows.empty()) return "\n";
    bool first = true;
    for (const auto& [k, v] : rows[0].params) {
        os << (first ? "" : ",") << k;
        first = false;
    }
    for (const auto& [k, v] : rows[0].metrics) {
        os << (first ? "" : ",") << k;
        first = false;
    }
    os << '\n';
    for (const auto& r : rows) {
        first = true;
        for (const auto& [k, v] : r.params) {
            os << (first ? "" : ",") << fmt(v);
            first = false;
        }
        for (const auto& [k, v] : r.metrics) {
            os << (first ? "" : ",") << cell_text(v);
            first = false;
        }
        os << '\n';
    }
    return os.str();
}

std::string to_json(const std::vector<ResultRow>& rows) {
    auto arr = nlohmann::ordered_json::array();
    auto num = [](double v) -> nlohmann::ordered_json {
        if (std::isfinite(v)) return v;
        return nullptr;
    };
    for (const auto& r : rows) {
        nlohmann::ordered_json o;
        for (const auto& [k, v] : r.params) {
            if (kIntegerParams.count(k)) o[k] = std::llround(v);
            else o[k] = num(v);
        }
        for (const auto& [k, v] : r.metrics) {
            if (auto d = std::get_if<double>(&v)) o[k] = num(*d);
            else if (auto i = std::get_if<long long>(&v)) o[k] = *i;
            else o[k] = std::get<std::string>(v);
        }
        arr.push_back(std::move(o));
    }
    return arr.dump(1) + "\n";
}

// ---------------------------------------------------------------- command line

namespace {

void parse_sweep_flag(const std::string& text, ExperimentSpec& s) {
    const auto eq = text.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--sweep expects NAME=v1,v2,...");
    s.sweep_param = text.substr(0, eq);
    std::stringstream ss(text.substr(eq + 1));
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != item.size()) throw ConfigError("--sweep: '" + item + "' is not a number");
        s.sweep_values.push_back(v);
    }
    if (s.sweep_values.empty()) throw ConfigError("--sweep: no values given");
}

struct Sub {
    CLI::App* app = nullptr;
    ExperimentSpec spec;
    std::string sweep;
};

void add_params(Sub& sub, const std::vector<std::string>& names) {
    for (const auto& n : names)
        sub.app->add_option_function<double>("--" + n, [&sub, n](const double& v) { sub.spec.params[n] = v; }, "parameter " + n);
}

void add_output(Sub& sub, bool with_sweep = true) {
    sub.app->add_option("--output,-o", sub.spec.output, "output path (default: standard output)");
    sub.app->add_option("--format", sub.spec.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
    sub.app->add_option("--workers", sub.spec.workers, "worker cap for sweeps (default: FRESHMA_WORKERS or cores)");
    if (with_sweep) sub.app->add_option("--sweep", sub.sweep, "NAME=v1,v2,... sweep over one parameter");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"freshness-oriented multiple access: analysis, optimization and simulation", "freshma"};
    app.require_subcommand(1);
    const std::vector<std::string> model = {"M", "N", "c", "lambda", "R", "Z1", "Z2", "K", "w1", "N1", "N2"};

    Sub analyze, optimize, solve, meanfield, simulate, compare, sweep;
    analyze.app = app.add_subcommand("analyze", "exact chain analysis (aoii: polling|aloha|tree, peak: td|fd)");
    analyze.app->add_option("target", analyze.spec.target, "aoii or peak")->required();
    analyze.app->add_option("--scheme", analyze.spec.scheme, "scheme")->required();
    add_params(analyze, model);
    add_output(analyze);

    optimize.app = app.add_subcommand("optimize", "optimal frequency-division bandwidth split");
    optimize.app->add_option("target", optimize.spec.target, "fd")->required();
    add_params(optimize, {"K", "c", "lambda", "eps", "N1", "N2"});
    add_output(optimize);

    solve.app = app.add_subcommand("solve", "dynamic bandwidth MDP by value iteration");
    solve.app->add_option("target", solve.spec.target, "xd")->required();
    add_params(solve, {"M", "N2", "c", "lambda", "imax", "q0max", "eps"});
    solve.app->add_option("--policy-out", solve.spec.policy_out, "write the policy table as JSON");
    add_output(solve);

    meanfield.app = app.add_subcommand("meanfield", "mean-field approximation");
    meanfield.app->add_option("--mode", meanfield.spec.target, "aoii or peak")->required();
    add_params(meanfield, {"M", "lambda", "c", "N"});
    add_output(meanfield);

    std::vector<std::string> sim_params = model;
    sim_params.insert(sim_params.end(), {"imax", "q0max", "eps", "slots", "warmup", "seed", "batches"});
    for (auto* s : {&simulate, &compare}) {
        const bool is_sim = s == &simulate;
        s->app = app.add_subcommand(is_sim ? "simulate" : "compare",
                                    is_sim ? "slot-level simulation" : "analytic and simulated rows for the same points");
        s->app->add_option("--scheme", s->spec.scheme, "polling|aloha|tree|td|fd|xd|meanfield-aoii|meanfield-peak")->required();
        add_params(*s, sim_params);
        add_output(*s);
    }
    analyze.spec.command = "analyze";
    optimize.spec.command = "optimize";
    solve.spec.command = "solve";
    meanfield.spec.command = "meanfield";
    simulate.spec.command = "simulate";
    compare.spec.command = "compare";

    std::string config_path;
    sweep.app = app.add_subcommand("sweep", "run an experiment described by a configuration file");
    sweep.app->add_option("--config", config_path, "JSON configuration")->required();
    sweep.app->add_option("--output,-o", sweep.spec.output, "override the configured output path");
    sweep.app->add_option("--workers", sweep.spec.workers, "worker cap");

    std::vector<std::string> argv_store = args;
    std::vector<char*> argv;
    std::string name = "freshma";
    argv.push_back(name.data());
    for (auto& a : argv_store) argv.push_back(a.data());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    }

    try {
        ExperimentSpec spec;
        if (sweep.app->parsed()) {
            spec = load_config(config_path);
            if (!sweep.spec.output.empty()) spec.output = sweep.spec.output;
            if (sweep.spec.workers > 0) spec.workers = sweep.spec.workers;
        } else {
            for (auto* s : {&analyze, &optimize, &solve, &meanfield, &simulate, &compare})
                if (s->app->parsed()) {
                    spec = s->spec;
                    if (!s->sweep.empty()) parse_sweep_flag(s->sweep, spec);
                }
        }
        const auto rows = run_experiment(spec);
        const std::string text = spec.format == "json" ? to_json(rows) : to_csv(rows);
        if (spec.output.empty()) {
            out << text;
        } else {
            std::ofstream f(spec.output, std::ios::binary);
            if (!f) throw ConfigError("cannot write output file '" + spec.output + "'");
            f << text;
        }
        for (const auto& r : rows)
            for (const auto& [k, v] : r.metrics)
                if (k == "warning" && !std::get<std::string>(v).empty()) err << "warning: " << std::get<std::string>(v) << '\n';
        return 0;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const InvalidParameter& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const StateSpaceTooLarge& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const InfeasibleParameters& e) {
        err << "error: " << e.what() << '\n';
        return 3;
    } catch (const ConvergenceFailure& e) {
        err << "error: " << e.what() << " (residual " << e.residual << ")\n";
        return 4;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace freshma

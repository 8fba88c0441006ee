// pmbp command-line front end.
//
// Every subcommand reads an optional --config JSON object; flags given on the
// command line override the matching config keys. Machine output goes to
// stdout or --out; logs go to stderr.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pmbp/dataset.hpp"
#include "pmbp/fitting.hpp"
#include "pmbp/gof.hpp"
#include "pmbp/gradient.hpp"
#include "pmbp/io.hpp"
#include "pmbp/sampling.hpp"

using namespace pmbp;

namespace {

enum class Kind { Num, Int, Str, NumList, IntList, StrList };

struct Flag {
    std::string name;  // flag name without dashes; config key uses '_' for '-'
    Kind kind;
    std::string help;
};

struct Command {
    CLI::App* app = nullptr;
    std::vector<Flag> flags;
    std::vector<std::string> values;
    std::string config;
};

std::string key_of(const std::string& flag) {
    std::string k = flag;
    std::replace(k.begin(), k.end(), '-', '_');
    return k;
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item.erase(0, item.find_first_not_of(" \t"));
        item.erase(item.find_last_not_of(" \t") + 1);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

double to_num(const std::string& s, const std::string& flag) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos != s.size()) throw std::invalid_argument("--" + flag + ": not a number: " + s);
    return v;
}

long long to_int(const std::string& s, const std::string& flag) {
    std::size_t pos = 0;
    long long v = 0;
    try {
        v = std::stoll(s, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos != s.size()) throw std::invalid_argument("--" + flag + ": not an integer: " + s);
    return v;
}

json flag_value(const Flag& f, const std::string& s) {
    switch (f.kind) {
        case Kind::Num: return to_num(s, f.name);
        case Kind::Int: return to_int(s, f.name);
        case Kind::Str: return s;
        case Kind::NumList: {
            json a = json::array();
            for (const auto& x : split_list(s)) a.push_back(to_num(x, f.name));
            return a;
        }
        case Kind::IntList: {
            json a = json::array();
            for (const auto& x : split_list(s)) a.push_back(to_int(x, f.name));
            return a;
        }
        default: {
            json a = json::array();
            for (const auto& x : split_list(s)) a.push_back(x);
            return a;
        }
    }
}

Command& add_command(CLI::App& app, std::vector<Command>& cmds, const std::string& name, const std::string& help,
                     std::vector<Flag> flags) {
    cmds.push_back({});
    auto& c = cmds.back();
    c.app = app.add_subcommand(name, help);
    const std::vector<Flag> common{{"seed", Kind::Int, "random seed"},
                                   {"threads", Kind::Int, "worker threads"},
                                   {"out", Kind::Str, "output file (default stdout)"}};
    c.flags = std::move(flags);
    c.flags.insert(c.flags.end(), common.begin(), common.end());
    c.values.resize(c.flags.size());
    c.app->add_option("--config", c.config, "JSON config file");
    for (std::size_t k = 0; k < c.flags.size(); ++k)
        c.app->add_option("--" + c.flags[k].name, c.values[k], c.flags[k].help);
    return c;
}

// config file merged with the flags that were given
json settings(const Command& c) {
    json s = json::object();
    if (!c.config.empty()) {
        s = read_json_file(c.config);
        if (!s.is_object()) throw std::invalid_argument("config must be a JSON object");
    }
    for (std::size_t k = 0; k < c.flags.size(); ++k)
        if (c.app->count("--" + c.flags[k].name) > 0) s[key_of(c.flags[k].name)] = flag_value(c.flags[k], c.values[k]);
    return s;
}

template <class T>
T get(const json& s, const std::string& key, T def) {
    if (!s.contains(key)) return def;
    try {
        return s.at(key).get<T>();
    } catch (const json::exception&) {
        throw std::invalid_argument("config key '" + key + "' has the wrong type");
    }
}

template <class T>
T need(const json& s, const std::string& key) {
    if (!s.contains(key)) throw std::invalid_argument("missing required setting '" + key + "'");
    return get<T>(s, key, T{});
}

ModelParams load_params(const json& s) {
    if (!s.contains("params")) throw std::invalid_argument("missing required setting 'params'");
    const auto& v = s.at("params");
    return params_from_json(v.is_string() ? read_json_file(v.get<std::string>()) : v);
}

std::vector<Dataset> load_datasets(const json& s) {
    if (!s.contains("data")) throw std::invalid_argument("missing required setting 'data'");
    json v = s.at("data");
    if (!v.is_array()) v = json::array({v});
    std::vector<Dataset> out;
    for (const auto& x : v) out.push_back(dataset_from_json(x.is_string() ? read_json_file(x.get<std::string>()) : x));
    if (out.empty()) throw std::invalid_argument("no datasets given");
    return out;
}

std::uint64_t seed_of(const json& s) { return get<std::uint64_t>(s, "seed", 1); }
int threads_of(const json& s) { return std::max(1, get<int>(s, "threads", default_threads())); }

void emit(const json& s, const std::string& text) {
    const auto out = get<std::string>(s, "out", "");
    if (out.empty()) {
        std::cout << text;
        std::cout.flush();
        if (!std::cout) throw std::runtime_error("failed writing stdout");
        return;
    }
    std::ofstream os(out, std::ios::binary);
    os << text;
    if (!os) throw std::runtime_error("failed writing " + out);
}

ConvGrid grid_for(const json& s, const ModelParams& p, double T) {
    const double step = get<double>(s, "step", ConvGrid::default_step(p, T));
    return ConvGrid::covering(T, step);
}

BoundMode bound_of(const json& s) {
    const auto b = get<std::string>(s, "bound", "ub2");
    if (b == "ub1") return BoundMode::UB1;
    if (b == "ub2") return BoundMode::UB2;
    throw std::invalid_argument("bound must be ub1 or ub2");
}

// ---- subcommands -----------------------------------------------------------------------

int cmd_sample_hawkes(const json& s) {
    const auto p = load_params(s);
    const double T = need<double>(s, "T");
    SamplerOptions opt;
    opt.max_events = get<long>(s, "max_events", opt.max_events);
    const auto h = sample_hawkes(p, T, seed_of(s), opt);
    std::cerr << "sample-hawkes: " << h.total() << " events on [0, " << T << ")\n";
    std::ostringstream os;
    write_events_jsonl(os, h);
    emit(s, os.str());
    return 0;
}

int cmd_sample_pmbp(const json& s) {
    const auto p = load_params(s);
    const double T = need<double>(s, "T");
    PmbpSamplerOptions opt;
    opt.max_events = get<long>(s, "max_events", opt.max_events);
    opt.gamma_h = get<double>(s, "gamma_h", opt.gamma_h);
    ThinningStats st;
    const auto h = sample_pmbp(p, T, grid_for(s, p, T), seed_of(s), bound_of(s), opt, &st);
    std::cerr << "sample-pmbp: " << h.total() << " events, " << st.proposals << " proposals, acceptance ratio "
              << st.acceptance_ratio() << "\n";
    std::ostringstream os;
    write_events_jsonl(os, h);
    emit(s, os.str());
    return 0;
}

int cmd_censor(const json& s) {
    const auto h = read_events_file(need<std::string>(s, "events"));
    const auto dv = get<std::vector<int>>(s, "dims", {0});
    const double w = need<double>(s, "width");
    const auto ds = censor(h, std::set<int>(dv.begin(), dv.end()), w);
    emit(s, to_json(ds).dump(2) + "\n");
    return 0;
}

int cmd_fit(const json& s) {
    const auto data = load_datasets(s);
    const int d = data.front().histories.dims();
    const int e = static_cast<int>(data.front().counts.size());
    const auto gamma = get<std::vector<double>>(s, "gamma", std::vector<double>(static_cast<std::size_t>(d), 0.0));
    std::vector<std::vector<double>> ones(static_cast<std::size_t>(d), std::vector<double>(static_cast<std::size_t>(d), 1.0));
    std::vector<std::vector<double>> zeros(static_cast<std::size_t>(d), std::vector<double>(static_cast<std::size_t>(d), 0.0));
    const auto shape = make_params(d, e, ones, zeros, gamma, std::vector<double>(static_cast<std::size_t>(d), 1.0));
    FitConfig cfg = fit_config_from_json(s);
    cfg.seed = seed_of(s);
    cfg.threads = threads_of(s);
    double T = 0.0;
    for (const auto& ds : data) T = std::max(T, ds.horizon);
    const auto grid = ConvGrid::covering(T, get<double>(s, "step", 0.05));
    const auto r = fit(data, shape, cfg, grid);
    std::cerr << "fit: nll " << format_double(r.nll) << " from start " << r.best_start << " in " << r.wall_time << " s\n";
    if (!r.regularity.subcritical) std::cerr << "warning: fitted parameters are not subcritical\n";
    emit(s, to_json(r).dump(2) + "\n");
    return 0;
}

std::vector<double> query_times(const json& s, double T) {
    if (s.contains("times")) return get<std::vector<double>>(s, "times", {});
    const double from = get<double>(s, "from", 0.0), to = get<double>(s, "to", T);
    const int n = get<int>(s, "n", 101);
    if (n < 1) throw std::invalid_argument("n must be positive");
    std::vector<double> t;
    for (int k = 0; k < n; ++k) t.push_back(n == 1 ? from : from + (to - from) * k / (n - 1));
    return t;
}

EventHistory observed_history(const json& s, const ModelParams& p, double T_default) {
    if (!s.contains("events")) return EventHistory(p.d, T_default);
    auto h = read_events_file(get<std::string>(s, "events", ""));
    if (h.dims() != p.d) throw DimensionError("events and params differ in dimension");
    return h;
}

int cmd_evaluate(const json& s) {
    const auto p = load_params(s);
    const double T0 = get<double>(s, "T", 0.0);
    auto h = observed_history(s, p, T0 > 0 ? T0 : 1.0);
    const double T = T0 > 0 ? T0 : h.horizon;
    const auto times = query_times(s, T);
    if (!std::is_sorted(times.begin(), times.end())) throw std::invalid_argument("query times must be non-decreasing");
    double tmax = T;
    for (double t : times) tmax = std::max(tmax, t);
    std::vector<std::vector<double>> xi, Xi;
    pmbp_evaluate(p, h, times, grid_for(s, p, tmax), get<double>(s, "gamma_h", 1e-6), &xi, &Xi);
    std::vector<std::string> header{"t"};
    for (int i = 1; i <= p.d; ++i) header.push_back("xi_" + std::to_string(i));
    for (int i = 1; i <= p.d; ++i) header.push_back("Xi_" + std::to_string(i));
    std::ostringstream os;
    CsvWriter w(os, header);
    for (std::size_t k = 0; k < times.size(); ++k) {
        std::vector<CsvWriter::Cell> row{times[k]};
        for (double v : xi[k]) row.emplace_back(v);
        for (double v : Xi[k]) row.emplace_back(v);
        w.row(row);
    }
    emit(s, os.str());
    return 0;
}

int cmd_predict(const json& s) {
    const auto p = load_params(s);
    auto h = observed_history(s, p, 1.0);
    const double t_train = get<double>(s, "t_train", h.horizon);
    std::vector<double> part;
    if (s.contains("partition")) {
        part = get<std::vector<double>>(s, "partition", {});
    } else {
        const double t_test = need<double>(s, "t_test");
        for (double b : window_boundaries(t_test - t_train, get<double>(s, "width", 1.0))) part.push_back(t_train + b);
        part.back() = t_test;
    }
    const int n = get<int>(s, "n_samples", 1000);
    const auto grid = grid_for(s, p, part.back());
    const auto method = get<std::string>(s, "method", "compensator");
    CountForecast f;
    if (method == "compensator")
        f = predict_counts(p, h, t_train, part, n, seed_of(s), grid, threads_of(s), bound_of(s));
    else if (method == "sampling")
        f = predict_counts_by_sampling(p, h, t_train, part, n, seed_of(s), grid, threads_of(s), bound_of(s));
    else
        throw std::invalid_argument("method must be compensator or sampling");
    if (f.samples_failed > 0.01 * n)
        std::cerr << "warning: " << f.samples_failed << " of " << n << " prediction samples failed and were dropped\n";
    std::ostringstream os;
    write_forecast_csv(os, f);
    emit(s, os.str());
    return 0;
}

int cmd_recover(const json& s) {
    const auto truth = load_params(s);
    RecoveryOptions opt;
    opt.horizon = get<double>(s, "T", 60.0);
    opt.grid_step = get<double>(s, "step", 0.05);
    opt.fit = fit_config_from_json(s);
    opt.fit.threads = threads_of(s);
    const auto t = recovery_experiment(truth, get<int>(s, "n_sequences", 50), get<int>(s, "group_size", 10),
                                       get<std::vector<double>>(s, "widths", {1.0}), seed_of(s), opt);
    std::ostringstream os;
    write_recovery_csv(os, t);
    emit(s, os.str());
    const auto summary = get<std::string>(s, "summary", "");
    if (!summary.empty()) {
        std::ofstream ss(summary, std::ios::binary);
        write_recovery_summary_csv(ss, t);
        if (!ss) throw std::runtime_error("failed writing " + summary);
    }
    return 0;
}

int cmd_gof(const json& s) {
    const auto p = load_params(s);
    const auto data = load_datasets(s);
    if (data.size() != 1) throw std::invalid_argument("gof takes exactly one dataset");
    const auto& ds = data.front();
    const auto rep = gof_report(p, ds, grid_for(s, p, ds.horizon), get<int>(s, "n_draws", 2000), seed_of(s),
                                get<double>(s, "gamma_h", 1e-6));
    emit(s, to_json(rep).dump(2) + "\n");
    return 0;
}

int cmd_grad_check(const json& s) {
    const auto p = load_params(s);
    const auto data = load_datasets(s);
    LikelihoodConfig lc = fit_config_from_json(s).likelihood;
    const bool with_gamma = get<bool>(s, "include_gamma", false);
    double T = 0.0;
    for (const auto& ds : data) T = std::max(T, ds.horizon);
    const auto grid = grid_for(s, p, T);
    const int threads = threads_of(s);
    const auto ids = free_parameters(p.d, with_gamma);
    const auto an = nll_and_gradient(p, data, lc, grid, ids, threads).grad;
    const auto fd = fd_grad_nll(p, data, lc, grid, get<double>(s, "fd_step", 1e-5), with_gamma, threads);
    const double tol = get<double>(s, "tol", 1e-3), floor = get<double>(s, "abs_floor", 1e-6);
    std::ostringstream os;
    CsvWriter w(os, {"param", "analytic", "finite_difference", "rel_error"});
    double worst = 0.0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
        const double err = std::abs(an[k] - fd[k]) / std::max(std::abs(fd[k]), floor);
        worst = std::max(worst, err);
        w.row({ids[k].name(), an[k], fd[k], err});
    }
    emit(s, os.str());
    std::cerr << "grad-check: max relative discrepancy " << format_double(worst) << "\n";
    return worst <= tol ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"PMBP(d,e) and multivariate Hawkes processes: sampling, fitting, evaluation, forecasting"};
    app.require_subcommand(1);
    std::vector<Command> cmds;
    cmds.reserve(9);
    const Flag params{"params", Kind::Str, "model parameter JSON file"};
    const Flag step{"step", Kind::Num, "convolution grid step"};
    const Flag data{"data", Kind::StrList, "dataset JSON file(s), comma separated"};
    const Flag events{"events", Kind::Str, "event JSONL file"};
    const Flag bound{"bound", Kind::Str, "thinning bound: ub1 or ub2"};
    const std::vector<Flag> fit_flags{{"n-starts", Kind::Int, "number of optimizer starts"},
                                      {"max-iterations", Kind::Int, "iterations per start"},
                                      {"gradient", Kind::Str, "analytic or finite-difference"},
                                      {"alpha-bounds", Kind::NumList, "lo,hi"},
                                      {"theta-bounds", Kind::NumList, "lo,hi"},
                                      {"nu-bounds", Kind::NumList, "lo,hi"},
                                      {"weights", Kind::NumList, "per-dimension likelihood weights"},
                                      {"nu-penalty", Kind::Num, "l1 penalty on nu"}};
    auto with = [](std::vector<Flag> a, const std::vector<Flag>& b) {
        a.insert(a.end(), b.begin(), b.end());
        return a;
    };
    using Fn = int (*)(const json&);
    std::vector<Fn> fns;
    add_command(app, cmds, "sample-hawkes", "sample a multivariate Hawkes process (JSONL)",
                {params, {"T", Kind::Num, "horizon"}, {"max-events", Kind::Int, "event cap"}});
    fns.push_back(cmd_sample_hawkes);
    add_command(app, cmds, "sample-pmbp", "sample a PMBP(d,e) process (JSONL)",
                {params, {"T", Kind::Num, "horizon"}, step, bound, {"max-events", Kind::Int, "event cap"}});
    fns.push_back(cmd_sample_pmbp);
    add_command(app, cmds, "censor", "interval-censor dimensions of an event file (dataset JSON)",
                {events, {"dims", Kind::IntList, "dimensions to censor (prefix 0..e-1)"}, {"width", Kind::Num, "window width"}});
    fns.push_back(cmd_censor);
    add_command(app, cmds, "fit", "maximum-likelihood fit (FitResult JSON)",
                with({data, step, {"gamma", Kind::NumList, "fixed gamma"}}, fit_flags));
    fns.push_back(cmd_fit);
    add_command(app, cmds, "evaluate", "intensity and compensator (CSV)",
                {params, events, step, {"T", Kind::Num, "horizon"}, {"times", Kind::NumList, "query times"},
                 {"from", Kind::Num, "first query time"}, {"to", Kind::Num, "last query time"},
                 {"n", Kind::Int, "number of query times"}});
    fns.push_back(cmd_evaluate);
    add_command(app, cmds, "predict", "forecast interval counts (CSV)",
                {params, events, step, bound, {"t-train", Kind::Num, "end of observation"},
                 {"t-test", Kind::Num, "end of forecast"}, {"width", Kind::Num, "interval width"},
                 {"partition", Kind::NumList, "explicit interval boundaries"},
                 {"n-samples", Kind::Int, "Monte-Carlo samples"}, {"method", Kind::Str, "compensator or sampling"}});
    fns.push_back(cmd_predict);
    add_command(app, cmds, "recover", "parameter recovery experiment (CSV)",
                with({params, step, {"T", Kind::Num, "sequence horizon"}, {"n-sequences", Kind::Int, "sequences"},
                      {"group-size", Kind::Int, "sequences per joint fit"}, {"widths", Kind::NumList, "censor widths"},
                      {"summary", Kind::Str, "summary CSV file"}},
                     fit_flags));
    fns.push_back(cmd_recover);
    add_command(app, cmds, "gof", "goodness-of-fit diagnostics (JSON)",
                {params, data, step, {"n-draws", Kind::Int, "Poisson draws for the fit score"}});
    fns.push_back(cmd_gof);
    add_command(app, cmds, "grad-check", "analytic vs finite-difference gradient (CSV)",
                {params, data, step, {"fd-step", Kind::Num, "finite-difference step"},
                 {"tol", Kind::Num, "pass threshold on relative error"}});
    fns.push_back(cmd_grad_check);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }
    for (std::size_t k = 0; k < cmds.size(); ++k) {
        if (!cmds[k].app->parsed()) continue;
        try {
            return fns[k](settings(cmds[k]));
        } catch (const std::exception& ex) {
            std::cerr << "error: " << ex.what() << "\n";
            return 1;
        }
    }
    return 1;
}

#pragma once

// File formats: JSON for parameters, datasets, configs and results; JSONL for
// event streams; CSV with a header row and 17 significant digits.

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "errors.hpp"
#include "fitting.hpp"
#include "gof.hpp"
#include "hawkes.hpp"
#include "model.hpp"
#include "sampling.hpp"

namespace pmbp {

using json = nlohmann::json;

// ---- CSV -------------------------------------------------------------------------

inline std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

class CsvWriter {
public:
    CsvWriter(std::ostream& os, const std::vector<std::string>& header) : os_(os), width_(header.size()) {
        row_strings(header);
    }

    struct Cell {
        std::string s;
        Cell(double x) : s(format_double(x)) {}
        Cell(int x) : s(std::to_string(x)) {}
        Cell(long x) : s(std::to_string(x)) {}
        Cell(std::size_t x) : s(std::to_string(x)) {}
        Cell(std::string x) : s(std::move(x)) {}
        Cell(const char* x) : s(x) {}
    };

    void row(const std::vector<Cell>& cells) {
        std::vector<std::string> v;
        for (const auto& c : cells) v.push_back(c.s);
        row_strings(v);
    }

private:
    static std::string quote(const std::string& s) {
        if (s.find_first_of(",\"\n") == std::string::npos) return s;
        std::string o = "\"";
        for (char c : s) o += c == '"' ? std::string("\"\"") : std::string(1, c);
        return o + "\"";
    }
    void row_strings(const std::vector<std::string>& v) {
        if (v.size() != width_) throw std::invalid_argument("csv row width differs from header");
        for (std::size_t k = 0; k < v.size(); ++k) os_ << (k ? "," : "") << quote(v[k]);
        os_ << '\n';
    }

    std::ostream& os_;
    std::size_t width_;
};

// minimal reader for the files this library writes (no embedded newlines)
inline std::vector<std::vector<std::string>> read_csv(std::istream& is) {
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(is, line)) {
        std::vector<std::string> r;
        std::string cur;
        bool q = false;
        for (std::size_t k = 0; k < line.size(); ++k) {
            const char c = line[k];
            if (q) {
                if (c == '"' && k + 1 < line.size() && line[k + 1] == '"') {
                    cur += '"';
                    ++k;
                } else if (c == '"') {
                    q = false;
                } else {
                    cur += c;
                }
            } else if (c == '"') {
                q = true;
            } else if (c == ',') {
                r.push_back(cur);
                cur.clear();
            } else {
                cur += c;
            }
        }
        r.push_back(cur);
        rows.push_back(std::move(r));
    }
    return rows;
}

// ---- model parameters ---------------------------------------------------------------

inline json to_json(const ModelParams& p) {
    return json{{"d", p.d}, {"e", p.e}, {"theta", p.theta.to_rows()}, {"alpha", p.alpha.to_rows()},
                {"gamma", p.gamma}, {"nu", p.nu}};
}

inline ModelParams params_from_json(const json& j) {
    try {
        const int d = j.at("d").get<int>();
        const int e = j.at("e").get<int>();
        auto p = make_params(d, e, j.at("theta").get<std::vector<std::vector<double>>>(),
                             j.at("alpha").get<std::vector<std::vector<double>>>(),
                             j.contains("gamma") ? j.at("gamma").get<std::vector<double>>() : std::vector<double>(static_cast<std::size_t>(d), 0.0),
                             j.at("nu").get<std::vector<double>>());
        return p;
    } catch (const json::exception& ex) {
        throw std::invalid_argument(std::string("bad parameter JSON: ") + ex.what());
    }
}

// ---- events (JSONL) ----------------------------------------------------------------------

inline void write_events_jsonl(std::ostream& os, const EventHistory& h) {
    os << json{{"T", h.horizon}, {"d", h.dims()}}.dump() << '\n';
    for (const auto& ev : merge_events(h)) os << json{{"dim", ev.dim}, {"t", ev.t}}.dump() << '\n';
}

inline EventHistory read_events_jsonl(std::istream& is) {
    std::string line;
    EventHistory h;
    bool header = false;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& ex) {
            throw std::invalid_argument("events line " + std::to_string(lineno) + ": " + ex.what());
        }
        if (!header) {
            if (!j.contains("T") || !j.contains("d")) throw std::invalid_argument("events: first record must be {\"T\",\"d\"}");
            h = EventHistory(j.at("d").get<int>(), j.at("T").get<double>());
            header = true;
            continue;
        }
        const int dim = j.at("dim").get<int>();
        if (dim < 0 || dim >= h.dims()) throw DimensionError("events: dim out of range on line " + std::to_string(lineno));
        h.times[static_cast<std::size_t>(dim)].push_back(j.at("t").get<double>());
    }
    if (!header) throw std::invalid_argument("events: empty stream");
    h.validate();
    return h;
}

// ---- datasets --------------------------------------------------------------------------

inline json to_json(const Dataset& ds) {
    json e = json::array(), c = json::array();
    for (const auto& cd : ds.counts) e.push_back({{"dim", cd.dim}, {"boundaries", cd.boundaries}, {"counts", cd.counts}});
    for (int j = static_cast<int>(ds.counts.size()); j < ds.histories.dims(); ++j)
        c.push_back({{"dim", j}, {"events", ds.histories.times[static_cast<std::size_t>(j)]}});
    return json{{"T", ds.horizon}, {"e_dims", e}, {"ec_dims", c}};
}

inline Dataset dataset_from_json(const json& j) {
    try {
        Dataset ds;
        ds.horizon = j.at("T").get<double>();
        const auto& e = j.at("e_dims");
        const auto& c = j.at("ec_dims");
        const int d = static_cast<int>(e.size() + c.size());
        ds.histories = EventHistory(d, ds.horizon);
        for (const auto& x : e) {
            CensoredDim cd;
            cd.dim = x.at("dim").get<int>();
            cd.boundaries = x.at("boundaries").get<std::vector<double>>();
            cd.counts = x.at("counts").get<std::vector<long>>();
            ds.counts.push_back(std::move(cd));
        }
        for (const auto& x : c) {
            const int dim = x.at("dim").get<int>();
            if (dim < 0 || dim >= d) throw DimensionError("dataset: ec dim out of range");
            ds.histories.times[static_cast<std::size_t>(dim)] = x.at("events").get<std::vector<double>>();
        }
        ds.validate(d, static_cast<int>(ds.counts.size()));
        return ds;
    } catch (const json::exception& ex) {
        throw std::invalid_argument(std::string("bad dataset JSON: ") + ex.what());
    }
}

// ---- fit configuration and results ---------------------------------------------------------

inline json to_json(const FitConfig& c) {
    return json{{"alpha_bounds", {c.alpha.lo, c.alpha.hi}},
                {"theta_bounds", {c.theta.lo, c.theta.hi}},
                {"nu_bounds", {c.nu.lo, c.nu.hi}},
                {"n_starts", c.n_starts},
                {"max_iterations", c.max_iterations},
                {"gradient", c.gradient == GradientMode::Analytic ? "analytic" : "finite-difference"},
                {"ftol", c.ftol},
                {"pgtol", c.pgtol},
                {"memory", c.memory},
                {"seed", c.seed},
                {"weights", c.likelihood.weights},
                {"nu_penalty", c.likelihood.nu_penalty},
                {"eps", c.likelihood.eps},
                {"gamma_h", c.likelihood.gamma_h},
                {"max_terms", c.likelihood.h_options.max_terms}};
}

// keys absent from j keep the defaults in base
inline FitConfig fit_config_from_json(const json& j, FitConfig c = {}) {
    try {
        auto bounds = [&](const char* k, Bounds& b) {
            if (!j.contains(k)) return;
            const auto v = j.at(k).get<std::vector<double>>();
            if (v.size() != 2) throw std::invalid_argument(std::string(k) + " must be [lo, hi]");
            b = {v[0], v[1]};
        };
        bounds("alpha_bounds", c.alpha);
        bounds("theta_bounds", c.theta);
        bounds("nu_bounds", c.nu);
        if (j.contains("n_starts")) c.n_starts = j.at("n_starts").get<int>();
        if (j.contains("max_iterations")) c.max_iterations = j.at("max_iterations").get<int>();
        if (j.contains("gradient")) {
            const auto g = j.at("gradient").get<std::string>();
            if (g == "analytic") c.gradient = GradientMode::Analytic;
            else if (g == "finite-difference") c.gradient = GradientMode::FiniteDifference;
            else throw std::invalid_argument("gradient must be analytic or finite-difference");
        }
        if (j.contains("ftol")) c.ftol = j.at("ftol").get<double>();
        if (j.contains("pgtol")) c.pgtol = j.at("pgtol").get<double>();
        if (j.contains("memory")) c.memory = j.at("memory").get<int>();
        if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("weights")) c.likelihood.weights = j.at("weights").get<std::vector<double>>();
        if (j.contains("nu_penalty")) c.likelihood.nu_penalty = j.at("nu_penalty").get<double>();
        if (j.contains("eps")) c.likelihood.eps = j.at("eps").get<double>();
        if (j.contains("gamma_h")) c.likelihood.gamma_h = j.at("gamma_h").get<double>();
        if (j.contains("max_terms")) c.likelihood.h_options.max_terms = j.at("max_terms").get<int>();
        c.validate();
        return c;
    } catch (const json::exception& ex) {
        throw std::invalid_argument(std::string("bad fit config: ") + ex.what());
    }
}

inline json to_json(const RegularityReport& r) {
    return json{{"rho_EE", r.rho_EE}, {"rho_EcEc", r.rho_EcEc}, {"rho_cross", r.rho_cross}, {"subcritical", r.subcritical}};
}

// wall time is left out so identical inputs give identical bytes
inline json to_json(const FitResult& r) {
    json starts = json::array();
    for (const auto& s : r.starts)
        starts.push_back({{"start", to_json(s.start)},
                          {"final", to_json(s.final_params)},
                          {"nll", s.ok ? json(s.final_nll) : json(nullptr)},
                          {"iterations", s.iterations},
                          {"termination", s.termination},
                          {"ok", s.ok}});
    return json{{"params", to_json(r.params)},
                {"nll", r.nll},
                {"best_start", r.best_start},
                {"regularity", to_json(r.regularity)},
                {"starts", starts}};
}

inline FitResult fit_result_from_json(const json& j) {
    FitResult r;
    r.params = params_from_json(j.at("params"));
    r.nll = j.at("nll").get<double>();
    r.best_start = j.at("best_start").get<int>();
    const auto& g = j.at("regularity");
    r.regularity = {g.at("rho_EE").get<double>(), g.at("rho_EcEc").get<double>(), g.at("rho_cross").get<double>(),
                    g.at("subcritical").get<bool>()};
    for (const auto& s : j.at("starts")) {
        StartReport sr;
        sr.start = params_from_json(s.at("start"));
        sr.final_params = params_from_json(s.at("final"));
        sr.ok = s.at("ok").get<bool>();
        if (!s.at("nll").is_null()) sr.final_nll = s.at("nll").get<double>();
        sr.iterations = s.at("iterations").get<int>();
        sr.termination = s.at("termination").get<std::string>();
        r.starts.push_back(std::move(sr));
    }
    return r;
}

// ---- diagnostics ------------------------------------------------------------------------------

inline json to_json(const GofReport& g) {
    json a = json::array();
    for (const auto& d : g.dims) {
        json x{{"dim", d.dim}, {"kind", d.kind}, {"statistic", d.statistic}, {"p_value", d.p_value}, {"n", d.n}};
        if (d.kind == "anscombe") x["fit_score"] = d.fit_score;
        a.push_back(x);
    }
    return json{{"dims", a}};
}

inline GofReport gof_report_from_json(const json& j) {
    GofReport g;
    for (const auto& x : j.at("dims")) {
        DimGof d;
        d.dim = x.at("dim").get<int>();
        d.kind = x.at("kind").get<std::string>();
        d.statistic = x.at("statistic").get<double>();
        d.p_value = x.at("p_value").get<double>();
        d.n = x.at("n").get<std::size_t>();
        if (x.contains("fit_score")) d.fit_score = x.at("fit_score").get<double>();
        g.dims.push_back(d);
    }
    return g;
}

inline const std::vector<std::string>& recovery_columns() {
    static const std::vector<std::string> c{"param_name", "true_value", "likelihood_mode", "group_index", "estimate"};
    return c;
}

inline const std::vector<std::string>& recovery_summary_columns() {
    static const std::vector<std::string> c{"param_name", "likelihood_mode", "true_value", "mean", "median", "iqr"};
    return c;
}

inline void write_recovery_csv(std::ostream& os, const RecoveryTable& t) {
    CsvWriter w(os, recovery_columns());
    for (const auto& r : t.rows) w.row({r.param, r.true_value, r.mode, r.group, r.estimate});
}

inline void write_recovery_summary_csv(std::ostream& os, const RecoveryTable& t) {
    CsvWriter w(os, recovery_summary_columns());
    for (const auto& s : t.summary) w.row({s.param, s.mode, s.true_value, s.mean, s.median, s.iqr});
}

inline void write_forecast_csv(std::ostream& os, const CountForecast& f) {
    CsvWriter w(os, {"interval_start", "interval_end", "dim", "mean", "sd"});
    for (std::size_t k = 0; k < f.mean.size(); ++k)
        for (std::size_t i = 0; i < f.mean[k].size(); ++i)
            w.row({f.boundaries[k], f.boundaries[k + 1], i, f.mean[k][i], f.sd[k][i]});
}

// ---- files ------------------------------------------------------------------------------------------

inline json read_json_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);
    try {
        return json::parse(is);
    } catch (const json::exception& ex) {
        throw std::invalid_argument(path + ": " + ex.what());
    }
}

inline EventHistory read_events_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);
    return read_events_jsonl(is);
}

}  // namespace pmbp

#include "cascade/case_io.hpp"

#include "cascade/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

namespace cascade {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

double parse_number(std::string_view token, std::size_t line) {
    double value = 0.0;
    const char* begin = token.data();
    const char* end = token.data() + token.size();
    if (!token.empty() && *begin == '+') ++begin;
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end) {
        if (token == "Inf" || token == "inf") return kInf;
        if (token == "-Inf" || token == "-inf") return -kInf;
        throw ParseError("malformed number '" + std::string(token) + "'", line);
    }
    return value;
}

int as_int(double v, std::size_t line, const char* what) {
    if (v != std::floor(v)) throw ParseError(std::string("non-integer ") + what, line);
    return static_cast<int>(v);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << content;
    if (!out) throw IoError("write failed for " + path.string());
}

struct Row {
    std::vector<double> values;
    std::size_t line;
};

}  // namespace

CaseFile parse_case(std::string_view text) {
    CaseFile cf;
    bool have_base = false;
    std::map<std::string, std::vector<Row>> tables;
    std::string current;      // matrix being read, empty when outside
    bool in_cell = false;     // inside a `{ ... }` block we ignore
    std::vector<double> pending;
    std::size_t pending_line = 0;

    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;

        if (const auto pct = raw.find('%'); pct != std::string_view::npos) raw = raw.substr(0, pct);
        std::string_view line = trim(raw);
        if (line.empty()) continue;

        if (in_cell) {
            if (line.find('}') != std::string_view::npos) in_cell = false;
            continue;
        }

        if (current.empty()) {
            if (line.starts_with("mpc.")) {
                const auto eq = line.find('=');
                if (eq == std::string_view::npos) continue;
                const std::string name(trim(line.substr(4, eq - 4)));
                std::string_view rhs = trim(line.substr(eq + 1));
                if (name == "baseMVA") {
                    if (rhs.ends_with(';')) rhs.remove_suffix(1);
                    cf.base_mva = parse_number(trim(rhs), line_no);
                    have_base = true;
                    continue;
                } else if (rhs.starts_with('[')) {
                    current = name;
                    tables[current];
                    line = trim(rhs.substr(1));
                    if (line.empty()) continue;
                } else if (rhs.starts_with('{')) {
                    if (rhs.find('}') == std::string_view::npos) in_cell = true;
                    continue;
                } else {
                    continue;
                }
            } else {
                continue;
            }
        }

        // Inside a matrix: rows are separated by ';' or newlines, ']' closes.
        bool closed = false;
        std::string_view body = line;
        if (const auto br = body.find(']'); br != std::string_view::npos) {
            body = body.substr(0, br);
            closed = true;
        }
        std::size_t start = 0;
        while (start <= body.size()) {
            const auto semi = body.find(';', start);
            const std::string_view chunk = body.substr(start, semi == std::string_view::npos ? std::string_view::npos : semi - start);
            std::size_t k = 0;
            while (k < chunk.size()) {
                while (k < chunk.size() && (chunk[k] == ' ' || chunk[k] == '\t' || chunk[k] == ',')) ++k;
                if (k >= chunk.size()) break;
                auto e = k;
                while (e < chunk.size() && chunk[e] != ' ' && chunk[e] != '\t' && chunk[e] != ',') ++e;
                if (pending.empty()) pending_line = line_no;
                pending.push_back(parse_number(chunk.substr(k, e - k), line_no));
                k = e;
            }
            if (semi == std::string_view::npos) break;
            if (!pending.empty()) tables[current].push_back({std::move(pending), pending_line});
            pending.clear();
            start = semi + 1;
        }
        // A newline also ends a row.
        if (!pending.empty()) {
            tables[current].push_back({std::move(pending), pending_line});
            pending.clear();
        }
        if (closed) current.clear();
    }
    if (!current.empty()) throw ParseError("unterminated matrix mpc." + current, line_no);
    if (!have_base) throw ParseError("missing mpc.baseMVA", 0);
    for (const char* required : {"bus", "gen", "branch"})
        if (!tables.count(required)) throw ParseError(std::string("missing mpc.") + required + " table", 0);

    for (const auto& row : tables["bus"]) {
        if (row.values.size() < 4) throw ParseError("malformed bus row (need at least 4 columns)", row.line);
        cf.buses.push_back({as_int(row.values[0], row.line, "bus id"), as_int(row.values[1], row.line, "bus type"),
                            row.values[2], row.values[3]});
    }
    for (const auto& row : tables["gen"]) {
        if (row.values.size() < 8) throw ParseError("malformed gen row (need at least 8 columns)", row.line);
        cf.gens.push_back({as_int(row.values[0], row.line, "gen bus"), row.values[1],
                           as_int(row.values[7], row.line, "gen status")});
    }
    for (const auto& row : tables["branch"]) {
        if (row.values.size() < 11) throw ParseError("malformed branch row (need at least 11 columns)", row.line);
        cf.branches.push_back({as_int(row.values[0], row.line, "from bus"), as_int(row.values[1], row.line, "to bus"),
                               row.values[2], row.values[3], row.values[5],
                               as_int(row.values[10], row.line, "branch status")});
    }

    // Validation
    if (!(cf.base_mva > 0.0)) throw ValidationError("baseMVA must be positive");
    std::set<int> ids;
    for (const auto& b : cf.buses)
        if (!ids.insert(b.bus_id).second) throw ValidationError("duplicate bus " + std::to_string(b.bus_id));
    for (const auto& g : cf.gens)
        if (!ids.count(g.bus_id)) throw ValidationError("generator references unknown bus " + std::to_string(g.bus_id));
    for (const auto& br : cf.branches) {
        for (int id : {br.from_bus, br.to_bus})
            if (!ids.count(id)) throw ValidationError("branch references unknown bus " + std::to_string(id));
        if (br.status != 0 && !(br.x > 0.0))
            throw ValidationError("in-service branch " + std::to_string(br.from_bus) + "-" + std::to_string(br.to_bus) +
                                  " has nonpositive reactance");
    }
    return cf;
}

CaseFile load_case(const std::filesystem::path& path) { return parse_case(read_file(path)); }

std::string serialize_case(const CaseFile& cf) {
    std::string out;
    char buf[512];
    out += "function mpc = case_export\n";
    out += "mpc.version = '2';\n";
    std::snprintf(buf, sizeof buf, "mpc.baseMVA = %.17g;\n\n", cf.base_mva);
    out += buf;
    out += "%% bus_i type Pd Qd Gs Bs area Vm Va baseKV zone Vmax Vmin\nmpc.bus = [\n";
    for (const auto& b : cf.buses) {
        std::snprintf(buf, sizeof buf, "\t%d\t%d\t%.17g\t%.17g\t0\t0\t1\t1\t0\t0\t1\t1.1\t0.9;\n", b.bus_id, b.type,
                      b.load_p, b.load_q);
        out += buf;
    }
    out += "];\n\n%% bus Pg Qg Qmax Qmin Vg mBase status Pmax Pmin\nmpc.gen = [\n";
    for (const auto& g : cf.gens) {
        std::snprintf(buf, sizeof buf, "\t%d\t%.17g\t0\t0\t0\t1\t%.17g\t%d\t0\t0;\n", g.bus_id, g.gen_p, cf.base_mva,
                      g.status);
        out += buf;
    }
    out += "];\n\n%% fbus tbus r x b rateA rateB rateC ratio angle status angmin angmax\nmpc.branch = [\n";
    for (const auto& br : cf.branches) {
        std::snprintf(buf, sizeof buf, "\t%d\t%d\t%.17g\t%.17g\t0\t%.17g\t0\t0\t0\t0\t%d\t-360\t360;\n", br.from_bus,
                      br.to_bus, br.r, br.x, br.rate_a, br.status);
        out += buf;
    }
    out += "];\n";
    return out;
}

// ---------------------------------------------------------------------------

namespace {

Grid balanced_copy(Grid g) {
    const double gen = g.total_generation();
    const double load = g.total_load();
    if (gen > 0.0 && load > 0.0) {
        const double ratio = load / gen;
        for (auto& b : g.buses) b.gen *= ratio;
    }
    return g;
}

double percentile(std::vector<double> values, double q) {
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

}  // namespace

Grid to_grid(const CaseFile& cf, const GridOptions& options) {
    Grid grid;
    grid.base_mva = cf.base_mva;
    std::unordered_map<int, std::size_t> index;
    for (const auto& row : cf.buses) {
        index[row.bus_id] = grid.buses.size();
        grid.buses.push_back({row.bus_id, 0.0, row.load_p / cf.base_mva});
    }
    for (const auto& g : cf.gens) {
        if (g.status == 0) continue;
        grid.buses[index.at(g.bus_id)].gen += g.gen_p / cf.base_mva;
    }
    for (const auto& br : cf.branches) {
        Line line;
        line.from = index.at(br.from_bus);
        line.to = index.at(br.to_bus);
        line.x = br.x > 0.0 ? br.x : 1.0;
        line.rating = br.rate_a / cf.base_mva;
        line.breaker = br.status == 0 ? Breaker::open : Breaker::closed;
        grid.lines.push_back(line);
    }

    std::vector<std::size_t> unrated;
    std::vector<double> nonzero;
    for (std::size_t l = 0; l < grid.lines.size(); ++l) {
        if (!grid.lines[l].closed()) continue;
        if (grid.lines[l].rating > 0.0)
            nonzero.push_back(grid.lines[l].rating);
        else
            unrated.push_back(l);
    }
    PowerFlowOptions lenient;
    lenient.check_balance = false;
    const FlowState base = solve_dc_power_flow(prepare_base_case(grid), lenient);
    // Rated lines already overloaded in the lossless base case get headroom.
    for (std::size_t l = 0; l < grid.lines.size(); ++l) {
        auto& line = grid.lines[l];
        const double flow = std::abs(base.flows(static_cast<Eigen::Index>(l)));
        if (line.closed() && line.rating > 0.0 && flow > line.rating)
            line.rating = options.rating_fallback_factor * flow;
    }
    if (!unrated.empty()) {
        std::vector<double> fallback(unrated.size());
        for (std::size_t k = 0; k < unrated.size(); ++k)
            fallback[k] = options.rating_fallback_factor * std::abs(base.flows(static_cast<Eigen::Index>(unrated[k])));
        double floor = 0.0;
        if (!nonzero.empty()) {
            floor = percentile(nonzero, options.fallback_floor_percentile);
        } else {
            std::vector<double> positive;
            for (double f : fallback)
                if (f > 0.0) positive.push_back(f);
            if (!positive.empty()) floor = percentile(positive, options.fallback_floor_percentile);
        }
        for (std::size_t k = 0; k < unrated.size(); ++k) grid.lines[unrated[k]].rating = std::max(fallback[k], floor);
    }
    for (auto& line : grid.lines)
        if (!line.closed() && !(line.rating > 0.0)) line.rating = kInf;
    return grid;
}

Grid prepare_base_case(const Grid& raw) {
    Grid g = raw;
    for (auto& b : g.buses) {
        if (b.load < 0.0) {
            b.gen -= b.load;
            b.load = 0.0;
        }
        if (b.gen < 0.0) {
            b.load -= b.gen;
            b.gen = 0.0;
        }
    }
    return balanced_copy(std::move(g));
}

// ---------------------------------------------------------------------------

const char* to_string(ControlMode mode) {
    switch (mode) {
        case ControlMode::perfect: return "perfect";
        case ControlMode::proposed: return "proposed";
        case ControlMode::breaker_only_closed: return "breaker-only-closed";
        case ControlMode::breaker_only_open: return "breaker-only-open";
        case ControlMode::none: return "none";
    }
    return "unknown";
}

std::optional<ControlMode> parse_control_mode(std::string_view name) {
    if (name == "perfect") return ControlMode::perfect;
    if (name == "proposed") return ControlMode::proposed;
    if (name == "breaker-only-closed" || name == "breaker-closed") return ControlMode::breaker_only_closed;
    if (name == "breaker-only-open" || name == "breaker-open") return ControlMode::breaker_only_open;
    if (name == "none") return ControlMode::none;
    return std::nullopt;
}

void ExperimentConfig::validate() const {
    if (!(initial_outage_fraction > 0.0 && initial_outage_fraction < 1.0))
        throw ValidationError("initial_outage_fraction must lie in (0, 1)");
    if (n_trials < 1) throw ValidationError("n_trials must be at least 1");
    if (lasso_lambda < 0.0) throw ValidationError("lasso_lambda must be nonnegative");
    if (lasso_tol < 0.0) throw ValidationError("lasso_tol must be nonnegative");
    if (!(rating_fallback_factor > 0.0)) throw ValidationError("rating_fallback_factor must be positive");
    if (noise_amplitude < 0.0) throw ValidationError("noise_amplitude must be nonnegative");
    if (!(overload_penalty > 0.0)) throw ValidationError("overload_penalty must be positive");
    if (max_solutions < 1) throw ValidationError("max_solutions must be at least 1");
    if (tier_cap < 1) throw ValidationError("tier_cap must be at least 1");
}

namespace {

nlohmann::json parse_flat_toml(std::string_view text) {
    nlohmann::json j = nlohmann::json::object();
    std::size_t line_no = 0;
    std::istringstream in{std::string(text)};
    std::string raw;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string_view line = trim(raw);
        if (line.empty() || line.front() == '#') continue;
        if (line.front() == '[') throw ParseError("TOML tables are not supported", line_no);
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ParseError("expected key = value", line_no);
        const std::string key(trim(line.substr(0, eq)));
        std::string_view value = trim(line.substr(eq + 1));
        if (!value.empty() && value.front() == '"') {
            const auto close = value.find('"', 1);
            if (close == std::string_view::npos) throw ParseError("unterminated string", line_no);
            j[key] = std::string(value.substr(1, close - 1));
            continue;
        }
        if (const auto hash = value.find('#'); hash != std::string_view::npos) value = trim(value.substr(0, hash));
        if (value == "true" || value == "false") {
            j[key] = value == "true";
        } else {
            j[key] = parse_number(value, line_no);
        }
    }
    return j;
}

template <typename T>
void read_unsigned(const nlohmann::json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    const double v = j.at(key).get<double>();
    if (v < 0.0 || v != std::floor(v)) throw ValidationError(std::string(key) + " must be a nonnegative integer");
    out = static_cast<T>(v);
}

void read_double(const nlohmann::json& j, const char* key, double& out) {
    if (j.contains(key)) out = j.at(key).get<double>();
}

}  // namespace

ExperimentConfig parse_config(std::string_view text, bool toml, const std::filesystem::path& base_dir) {
    nlohmann::json j;
    if (toml) {
        j = parse_flat_toml(text);
    } else {
        try {
            j = nlohmann::json::parse(text);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(e.what(), 0);
        }
    }
    if (!j.is_object()) throw ParseError("config must be an object", 0);

    static const std::set<std::string> known = {
        "case_path",        "initial_outage_fraction", "n_trials",        "rng_seed",         "type1_link_count",
        "control_mode",     "lasso_lambda",            "lasso_tol",       "lasso_lambda_search",
        "rating_fallback_factor", "noise_amplitude",   "overload_penalty", "max_solutions",   "tier_cap",
        "threads"};
    for (const auto& [key, value] : j.items())
        if (!known.count(key)) throw ValidationError("unknown config field '" + key + "'");

    ExperimentConfig c;
    try {
        if (j.contains("case_path")) {
            std::filesystem::path p = j.at("case_path").get<std::string>();
            c.case_path = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
        }
        read_double(j, "initial_outage_fraction", c.initial_outage_fraction);
        read_unsigned(j, "n_trials", c.n_trials);
        read_unsigned(j, "rng_seed", c.rng_seed);
        read_unsigned(j, "type1_link_count", c.type1_link_count);
        if (j.contains("control_mode")) {
            const auto name = j.at("control_mode").get<std::string>();
            const auto mode = parse_control_mode(name);
            if (!mode) throw ValidationError("unknown control_mode '" + name + "'");
            c.control_mode = *mode;
        }
        read_double(j, "lasso_lambda", c.lasso_lambda);
        read_double(j, "lasso_tol", c.lasso_tol);
        if (j.contains("lasso_lambda_search")) c.lasso_lambda_search = j.at("lasso_lambda_search").get<bool>();
        read_double(j, "rating_fallback_factor", c.rating_fallback_factor);
        read_double(j, "noise_amplitude", c.noise_amplitude);
        read_double(j, "overload_penalty", c.overload_penalty);
        read_unsigned(j, "max_solutions", c.max_solutions);
        read_unsigned(j, "tier_cap", c.tier_cap);
        read_unsigned(j, "threads", c.threads);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("config type error: ") + e.what());
    }
    c.validate();
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    const auto text = read_file(path);
    const bool toml = path.extension() == ".toml";
    return parse_config(text, toml, path.parent_path());
}

// ---------------------------------------------------------------------------

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

}  // namespace

std::string format_metrics_csv(const std::vector<MetricsRow>& rows) {
    std::string out(kMetricsHeader);
    out += '\n';
    for (const auto& r : rows) {
        out += std::to_string(r.trial) + ',' + std::to_string(r.tier) + ',' + std::to_string(r.islands_true) + ',' +
               std::to_string(r.islands_detected) + ',' + (r.island_accuracy ? fmt_double(*r.island_accuracy) : "") +
               ',' + fmt_double(r.false_alarm_pct) + ',' + fmt_double(r.miss_pct) + ',' + fmt_double(r.load_served_pu) +
               '\n';
    }
    return out;
}

void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::filesystem::path& path) {
    write_file(path, format_metrics_csv(rows));
}

std::vector<MetricsRow> parse_metrics_csv(std::string_view text) {
    std::vector<MetricsRow> rows;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line_no == 1) {
            if (line != kMetricsHeader) throw ParseError("unexpected metrics header", 1);
            continue;
        }
        if (trim(line).empty()) continue;
        std::vector<std::string> f;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ',')) f.push_back(cell);
        if (line.back() == ',') f.emplace_back();
        if (f.size() != 8) throw ParseError("expected 8 fields", line_no);
        MetricsRow r;
        r.trial = static_cast<std::size_t>(parse_number(f[0], line_no));
        r.tier = static_cast<std::size_t>(parse_number(f[1], line_no));
        r.islands_true = static_cast<std::size_t>(parse_number(f[2], line_no));
        r.islands_detected = static_cast<std::size_t>(parse_number(f[3], line_no));
        if (!f[4].empty()) r.island_accuracy = parse_number(f[4], line_no);
        r.false_alarm_pct = parse_number(f[5], line_no);
        r.miss_pct = parse_number(f[6], line_no);
        r.load_served_pu = parse_number(f[7], line_no);
        rows.push_back(r);
    }
    if (line_no == 0) throw ParseError("empty metrics file", 0);
    return rows;
}

std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path) {
    return parse_metrics_csv(read_file(path));
}

std::string format_summary_json(const std::vector<ModeSummary>& modes) {
    nlohmann::ordered_json j;
    j["modes"] = nlohmann::ordered_json::object();
    for (const auto& m : modes) {
        nlohmann::ordered_json e;
        e["trials"] = m.load_served.size();
        e["min"] = m.quartiles.min;
        e["q1"] = m.quartiles.q1;
        e["median"] = m.quartiles.median;
        e["q3"] = m.quartiles.q3;
        e["max"] = m.quartiles.max;
        e["load_served"] = m.load_served;
        j["modes"][m.mode] = std::move(e);
    }
    return j.dump(2) + "\n";
}

void write_summary_json(const std::vector<ModeSummary>& modes, const std::filesystem::path& path) {
    write_file(path, format_summary_json(modes));
}

}  // namespace cascade

#pragma once

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "valtrack/error.hpp"
#include "valtrack/experiments.hpp"

// Flat text configuration:
//
//   # comment
//   market.lambda = 0.04
//   population.mo = 0.216
//
// Every key is optional; unknown keys and malformed values are rejected with
// the line they came from. If population.val is not given it takes whatever
// share Mo and Rand leave.

namespace valtrack {

inline constexpr const char* kCodeVersion = "0.1.0";

namespace config_detail {

inline std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline double to_double(const std::string& v)
{
    errno = 0;
    char* end = nullptr;
    const double x = std::strtod(v.c_str(), &end);
    if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE || !std::isfinite(x))
        throw ConfigError("expected a finite number, got '" + v + "'");
    return x;
}

inline long long to_int(const std::string& v)
{
    errno = 0;
    char* end = nullptr;
    const long long x = std::strtoll(v.c_str(), &end, 10);
    if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE)
        throw ConfigError("expected an integer, got '" + v + "'");
    return x;
}

inline std::uint64_t to_u64(const std::string& v)
{
    errno = 0;
    char* end = nullptr;
    if (!v.empty() && v[0] == '-')
        throw ConfigError("expected an unsigned integer, got '" + v + "'");
    const unsigned long long x = std::strtoull(v.c_str(), &end, 10);
    if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE)
        throw ConfigError("expected an unsigned integer, got '" + v + "'");
    return x;
}

inline bool to_bool(const std::string& v)
{
    if (v == "true" || v == "1")
        return true;
    if (v == "false" || v == "0")
        return false;
    throw ConfigError("expected true or false, got '" + v + "'");
}

inline std::string fmt(double x)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

// `get` returns an empty string for keys that do not apply to the active
// variant (market.zeta under ratio impact, population.u under gamma, ...).
struct Field {
    std::function<void(ExperimentConfig&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

// Crash-rule parameter: level, fraction or deciblack count, by rule.
inline double crash_param(const CrashPredicate& p)
{
    if (const auto* d = std::get_if<DropBelow>(&p.rule))
        return d->level;
    if (const auto* r = std::get_if<RelativeDrop>(&p.rule))
        return r->fraction;
    return std::get<DeciblackDrop>(p.rule).n;
}

inline void set_crash(CrashPredicate& p, const std::string& rule, double param)
{
    if (rule == "drop_below")
        p.rule = DropBelow{param};
    else if (rule == "relative_drop")
        p.rule = RelativeDrop{param};
    else if (rule == "deciblack_drop")
        p.rule = DeciblackDrop{param};
    else
        throw ConfigError("crash.rule must be drop_below, relative_drop or deciblack_drop, got '" + rule + "'");
}

inline std::string crash_rule_name(const CrashPredicate& p)
{
    if (std::holds_alternative<DropBelow>(p.rule))
        return "drop_below";
    if (std::holds_alternative<RelativeDrop>(p.rule))
        return "relative_drop";
    return "deciblack_drop";
}

inline PowerLaw& power_law(ExperimentConfig& c)
{
    if (!std::holds_alternative<PowerLaw>(c.market.impact))
        c.market.impact = PowerLaw{};
    return std::get<PowerLaw>(c.market.impact);
}

inline GammaValuation& gamma(ExperimentConfig& c)
{
    if (!std::holds_alternative<GammaValuation>(c.population.valuation))
        c.population.valuation = GammaValuation{};
    return std::get<GammaValuation>(c.population.valuation);
}

#define VT_DOUBLE(key, expr)                                                                        \
    {                                                                                               \
        key, Field{[](ExperimentConfig& c, const std::string& v) { expr = to_double(v); },          \
                   [](const ExperimentConfig& c) { return fmt(expr); }}                              \
    }
#define VT_INT(key, expr)                                                                           \
    {                                                                                               \
        key, Field{[](ExperimentConfig& c, const std::string& v) { expr = static_cast<int>(to_int(v)); }, \
                   [](const ExperimentConfig& c) { return std::to_string(expr); }}                  \
    }

// Ordered key table; serialize_config writes keys in this order.
inline const std::vector<std::pair<std::string, Field>>& fields()
{
    static const std::vector<std::pair<std::string, Field>> table = {
        VT_DOUBLE("market.lambda", c.market.lambda),
        VT_DOUBLE("market.eta", c.market.eta),
        VT_DOUBLE("market.mu", c.market.mu),
        VT_DOUBLE("market.rho", c.market.rho),
        {"market.impact",
         Field{[](ExperimentConfig& c, const std::string& v) {
                   if (v == "ratio")
                       c.market.impact = RatioPower{};
                   else if (v == "powerlaw")
                       power_law(c);
                   else
                       throw ConfigError("market.impact must be ratio or powerlaw, got '" + v + "'");
               },
               [](const ExperimentConfig& c) -> std::string {
                   return std::holds_alternative<PowerLaw>(c.market.impact) ? "powerlaw" : "ratio";
               }}},
        {"market.zeta",
         Field{[](ExperimentConfig& c, const std::string& v) { power_law(c).zeta = to_double(v); },
               [](const ExperimentConfig& c) {
                   const auto* p = std::get_if<PowerLaw>(&c.market.impact);
                   return p ? fmt(p->zeta) : std::string();
               }}},
        {"market.liquidity",
         Field{[](ExperimentConfig& c, const std::string& v) { power_law(c).liquidity = to_double(v); },
               [](const ExperimentConfig& c) {
                   const auto* p = std::get_if<PowerLaw>(&c.market.impact);
                   return p ? fmt(p->liquidity) : std::string();
               }}},
        {"market.settlement",
         Field{[](ExperimentConfig& c, const std::string& v) {
                   if (v == "updated")
                       c.market.settlement = Settlement::UpdatedPrice;
                   else if (v == "current")
                       c.market.settlement = Settlement::CurrentPrice;
                   else
                       throw ConfigError("market.settlement must be updated or current, got '" + v + "'");
               },
               [](const ExperimentConfig& c) -> std::string { return settlement_name(c.market.settlement); }}},
        VT_INT("market.horizon", c.market.horizon),
        VT_DOUBLE("market.price_floor", c.market.price_floor),
        VT_DOUBLE("commit.kV_buy", c.commitments.kV_buy),
        VT_DOUBLE("commit.kV_sell", c.commitments.kV_sell),
        VT_DOUBLE("commit.kM_buy", c.commitments.kM_buy),
        VT_DOUBLE("commit.kM_sell", c.commitments.kM_sell),
        VT_DOUBLE("commit.kR_buy", c.commitments.kR_buy),
        VT_DOUBLE("commit.kR_sell", c.commitments.kR_sell),
        VT_DOUBLE("population.val", c.population.val_fraction),
        VT_DOUBLE("population.mo", c.population.mo_fraction),
        VT_DOUBLE("population.rand", c.population.rand_fraction),
        VT_INT("population.n_vals", c.population.n_vals),
        {"population.valuation",
         Field{[](ExperimentConfig& c, const std::string& v) {
                   if (v == "fixed") {
                       if (!std::holds_alternative<FixedValuation>(c.population.valuation))
                           c.population.valuation = FixedValuation{};
                   } else if (v == "gamma") {
                       gamma(c);
                   } else {
                       throw ConfigError("population.valuation must be fixed or gamma, got '" + v + "'");
                   }
               },
               [](const ExperimentConfig& c) -> std::string {
                   return std::holds_alternative<GammaValuation>(c.population.valuation) ? "gamma" : "fixed";
               }}},
        {"population.u",
         Field{[](ExperimentConfig& c, const std::string& v) {
                   c.population.valuation = FixedValuation{to_double(v)};
               },
               [](const ExperimentConfig& c) {
                   const auto* f = std::get_if<FixedValuation>(&c.population.valuation);
                   return f ? fmt(f->u) : std::string();
               }}},
        {"population.gamma_shape",
         Field{[](ExperimentConfig& c, const std::string& v) { gamma(c).shape = to_double(v); },
               [](const ExperimentConfig& c) {
                   const auto* g = std::get_if<GammaValuation>(&c.population.valuation);
                   return g ? fmt(g->shape) : std::string();
               }}},
        {"population.gamma_rate",
         Field{[](ExperimentConfig& c, const std::string& v) { gamma(c).rate = to_double(v); },
               [](const ExperimentConfig& c) {
                   const auto* g = std::get_if<GammaValuation>(&c.population.valuation);
                   return g ? fmt(g->rate) : std::string();
               }}},
        {"population.refined_rand",
         Field{[](ExperimentConfig& c, const std::string& v) { c.population.refined_rand = to_bool(v); },
               [](const ExperimentConfig& c) -> std::string { return c.population.refined_rand ? "true" : "false"; }}},
        VT_DOUBLE("population.critical_fraction", c.population.critical_fraction),
        VT_DOUBLE("population.cash", c.population.total_cash),
        VT_DOUBLE("population.p0", c.population.initial_price),
        VT_DOUBLE("population.m0", c.population.initial_momentum),
        {"crash.rule",
         Field{[](ExperimentConfig& c, const std::string& v) {
                   // Switching rule keeps the parameter only when the rule is unchanged.
                   if (v != crash_rule_name(c.predicate)) {
                       const double d = v == "drop_below" ? 0.01 : v == "relative_drop" ? 0.30 : 5.0;
                       set_crash(c.predicate, v, d);
                   }
               },
               [](const ExperimentConfig& c) { return crash_rule_name(c.predicate); }}},
        {"crash.param",
         Field{[](ExperimentConfig& c, const std::string& v) {
                   set_crash(c.predicate, crash_rule_name(c.predicate), to_double(v));
               },
               [](const ExperimentConfig& c) { return fmt(crash_param(c.predicate)); }}},
        {"run.seed",
         Field{[](ExperimentConfig& c, const std::string& v) { c.seed = to_u64(v); },
               [](const ExperimentConfig& c) { return std::to_string(c.seed); }}},
        VT_INT("run.replicates", c.replicates),
        VT_INT("run.resolution", c.resolution),
        VT_INT("run.workers", c.workers),
    };
    return table;
}

#undef VT_DOUBLE
#undef VT_INT

inline const Field* find_field(const std::string& key)
{
    for (const auto& [k, f] : fields())
        if (k == key)
            return &f;
    return nullptr;
}

} // namespace config_detail

// A key = value assignment with the place it came from, for error messages.
struct Setting {
    std::string key;
    std::string value;
    std::string origin; // "file:line" or "--flag"
};

inline std::vector<Setting> parse_settings(std::string_view text, const std::string& source = "<config>")
{
    std::vector<Setting> out;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t nl = text.find('\n', pos);
        const std::string_view raw = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        std::string line(raw);
        if (const auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        line = config_detail::trim(line);
        if (line.empty())
            continue;
        const std::string where = source + ":" + std::to_string(line_no);
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(where + ": expected 'key = value'");
        Setting s{config_detail::trim(std::string_view(line).substr(0, eq)),
                  config_detail::trim(std::string_view(line).substr(eq + 1)), where};
        if (s.key.empty())
            throw ConfigError(where + ": missing key");
        if (s.value.empty())
            throw ConfigError(where + ": missing value for '" + s.key + "'");
        out.push_back(std::move(s));
    }
    return out;
}

inline std::vector<std::string> config_keys()
{
    std::vector<std::string> keys;
    for (const auto& [k, f] : config_detail::fields())
        keys.push_back(k);
    return keys;
}

inline void apply_setting(ExperimentConfig& cfg, const Setting& s)
{
    const auto* field = config_detail::find_field(s.key);
    if (!field)
        throw ConfigError(s.origin + ": unknown key '" + s.key + "'");
    try {
        field->set(cfg, s.value);
    } catch (const ConfigError& e) {
        throw ConfigError(s.origin + ": " + s.key + ": " + e.what());
    }
}

// Checks every range invariant, reporting violations as ConfigError.
inline void validate_config(const ExperimentConfig& cfg)
{
    try {
        cfg.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
}

// Applies file settings, then overrides, in order. Later settings win.
inline ExperimentConfig resolve_config(const std::vector<Setting>& settings, ExperimentConfig base = {})
{
    bool val_given = false;
    for (const auto& s : settings) {
        apply_setting(base, s);
        if (s.key == "population.val")
            val_given = true;
    }
    if (!val_given)
        base.population.val_fraction = std::max(0.0, 1.0 - base.population.mo_fraction - base.population.rand_fraction);
    try {
        validate_config(base);
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("invalid configuration: ") + e.what());
    }
    return base;
}

inline ExperimentConfig parse_config(std::string_view text, const std::vector<Setting>& overrides = {},
                                     const std::string& source = "<config>")
{
    auto settings = parse_settings(text, source);
    settings.insert(settings.end(), overrides.begin(), overrides.end());
    return resolve_config(settings);
}

inline std::string read_text_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline ExperimentConfig load_config(const std::string& path, const std::vector<Setting>& overrides = {})
{
    return parse_config(read_text_file(path), overrides, path);
}

inline std::vector<std::pair<std::string, std::string>> config_entries(const ExperimentConfig& cfg)
{
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& [k, f] : config_detail::fields())
        if (std::string v = f.get(cfg); !v.empty())
            out.emplace_back(k, std::move(v));
    return out;
}

// Every applicable key, in table order, with doubles at full precision, so
// that parse_config(serialize_config(c)) reproduces c.
inline std::string serialize_config(const ExperimentConfig& cfg)
{
    std::string out;
    for (const auto& [k, v] : config_entries(cfg))
        out += k + " = " + v + "\n";
    return out;
}

// desk: resolution 20 x 20 replicates. full: resolution 99 x 100 replicates.
inline void apply_preset(ExperimentConfig& cfg, const std::string& name)
{
    if (name == "desk") {
        cfg.resolution = 20;
        cfg.replicates = 20;
    } else if (name == "full") {
        cfg.resolution = 99;
        cfg.replicates = 100;
    } else {
        throw ConfigError("unknown preset '" + name + "' (expected desk or full)");
    }
}

} // namespace valtrack

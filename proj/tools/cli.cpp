#include "cli.hpp"

#include "cvp/analytic.hpp"
#include "cvp/error.hpp"
#include "cvp/marketdata.hpp"
#include "cvp/montecarlo.hpp"
#include "cvp/params.hpp"
#include "cvp/pde.hpp"
#include "cvp/verify.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>

namespace cvp::cli {

namespace {

using nlohmann::json;

enum class Format { text, json };

struct RunConfig {
  std::string command;
  std::string model;
  std::string method;
  std::string params_path;
  std::string out_path;
  std::string input_path;
  std::uint64_t seed = 1;
  std::string format = "text";
  double t2 = 0.0;
  double tolerance_scale = 1.0;
  std::vector<int> criteria;
};

/// Where data goes: the --out file when given, stdout otherwise.
struct Io {
  std::ostream& out;
  std::ostream& err;
  std::ofstream file;
  Format format = Format::text;

  [[nodiscard]] bool to_file() const { return file.is_open(); }
  std::ostream& data() { return to_file() ? static_cast<std::ostream&>(file) : out; }
};

std::string printf_double(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}
std::string full(double v) {
  if (!std::isfinite(v)) return "";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}
std::string human(double v) { return printf_double("%.6g", v); }
// Prices are quoted to six decimals in human mode (cents of a cent at typical scales).
std::string price_text(double v) { return printf_double("%.6f", v); }

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

Format parse_format(const std::string& f) {
  if (f == "text" || f == "csv" || f == "delimited" || f == "delimited-text") return Format::text;
  if (f == "json" || f == "structured") return Format::json;
  throw InvalidInput("unknown --format '" + f + "' (text or json)");
}

// ---------------------------------------------------------------- parameters

struct LoadedModel {
  std::string name;
  Model model;
  double drift = 0.0;          ///< bsm / nonlinear drift used by `simulate`
  double x0 = 0.0;             ///< initial value variance
  double y0 = 0.0;             ///< initial volume variance
  std::array<double, 4> xs{};  ///< initial expectation factors
};

std::array<double, 4> four(const ParamFile& pf, const std::string& key) {
  const auto v = pf.numbers(key, 4);
  return {v[0], v[1], v[2], v[3]};
}

Eigen::Matrix4d matrix4(const ParamFile& pf, const std::string& key) {
  const auto v = pf.numbers(key, 16);
  Eigen::Matrix4d m;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) m(i, j) = v[static_cast<std::size_t>(4 * i + j)];
  return m;
}

StochVolParams read_variance(const ParamFile& pf) {
  StochVolParams sv;
  sv.alpha_x = pf.number("alpha_x");
  sv.theta_x = pf.number("theta_x");
  sv.sigma_x = pf.number("sigma_x");
  sv.lambda_xc = pf.number("lambda_xc");
  sv.vartheta = pf.number("vartheta", 0.0);
  return sv;
}

LoadedModel load_model(const std::string& name, const ParamFile& pf) {
  LoadedModel m;
  m.name = name;
  if (name == "bsm") {
    const double sigma = pf.number("sigma");
    if (!(sigma >= 0.0)) throw InvalidInput("bsm: sigma must be >= 0");
    m.model = BsmModel{sigma};
    m.drift = pf.number("mu", 0.0);
  } else if (name == "two-factor") {
    TwoFactorParams p;
    p.mu_c = pf.number("mu_c", 0.0);
    p.sigma_c = pf.number("sigma_c");
    p.mu_v = pf.number("mu_v", 0.0);
    p.sigma_v = pf.number("sigma_v");
    p.lambda = pf.number("lambda");
    validate(p);
    m.model = TwoFactorModel{p};
  } else if (name == "expectations") {
    ExpectationParams e;
    e.mu = four(pf, "mu");
    e.sigma = four(pf, "sigma");
    e.a = four(pf, "a");
    e.b = four(pf, "b");
    if (pf.has("corr")) e.corr = matrix4(pf, "corr");
    validate(e);
    if (pf.has("x_init")) m.xs = four(pf, "x_init");
    m.model = ExpectationsModel{e};
  } else if (name == "nonlinear") {
    FeedbackParams fb;
    fb.mu = pf.number("mu", 0.0);
    fb.sigma = pf.number("sigma");
    if (!(fb.sigma >= 0.0)) throw InvalidInput("nonlinear: sigma must be >= 0");
    const std::string kind = pf.text("amplitude", "constant");
    if (kind == "constant") {
      fb.amplitude = ConstantAmplitude{pf.number("amplitude_c", 1.0)};
    } else if (kind == "rational") {
      fb.amplitude = RationalAmplitude{pf.number("amplitude_a"), pf.number("amplitude_b")};
    } else if (kind == "table") {
      fb.amplitude = TabulatedAmplitude{pf.numbers("amplitude_s"), pf.numbers("amplitude_values")};
    } else {
      throw InvalidInput("nonlinear: amplitude must be constant, rational or table, got '" + kind + "'");
    }
    m.drift = fb.mu;
    m.model = NonlinearModel{fb};
  } else if (name == "heston") {
    StochVolParams sv = read_variance(pf);
    validate(sv);
    m.x0 = pf.number("x0");
    m.drift = pf.number("mu_c", 0.0);
    m.model = HestonModel{sv};
  } else if (name == "stochvol-3d") {
    TwoFactorParams p;
    p.mu_c = pf.number("mu_c", 0.0);
    p.mu_v = pf.number("mu_v", 0.0);
    p.sigma_v = pf.number("sigma_v");
    p.lambda = pf.number("lambda");
    StochVolParams sv = read_variance(pf);
    sv.alpha_y = pf.number("alpha_y", 0.0);
    sv.theta_y = pf.number("theta_y", 0.0);
    sv.sigma_y = pf.number("sigma_y", 0.0);
    sv.lambda_xv = pf.number("lambda_xv", 0.0);
    if (pf.has("corr")) sv.full_corr = matrix4(pf, "corr");
    validate(p);
    validate(sv);
    m.x0 = pf.number("x0");
    m.y0 = pf.number("y0", p.sigma_v * p.sigma_v);
    m.model = StochVol3dModel{p, sv};
  } else {
    throw InvalidInput("unknown model '" + name +
                       "' (bsm, two-factor, expectations, nonlinear, heston, stochvol-3d)");
  }
  if (!(m.x0 >= 0.0) || !(m.y0 >= 0.0)) throw InvalidInput(name + ": initial variances must be >= 0");
  return m;
}

struct Contract {
  PricingTerms terms;
  Payoff payoff;
  double p0 = 0.0;
  double v0 = 1.0;
};

Contract read_contract(const ParamFile& pf) {
  Contract c;
  const std::optional<PayoffKind> kind =
      pf.has("payoff") ? std::optional(payoff_kind_from_string(pf.text("payoff"))) : std::nullopt;
  c.terms.r = pf.number("r");
  c.terms.tau = pf.number("tau");
  c.terms.strike = kind == PayoffKind::claim_pv ? pf.number("strike", 0.0) : pf.number("strike");
  if (pf.has("kind")) {
    const std::string k = pf.text("kind");
    if (k != "call" && k != "put") throw InvalidInput("kind must be call or put, got '" + k + "'");
    c.terms.kind = k == "call" ? OptionKind::call : OptionKind::put;
    if ((kind == PayoffKind::call_on_p && k != "call") || (kind == PayoffKind::put_on_p && k != "put"))
      throw InvalidInput("kind '" + k + "' contradicts payoff '" + pf.text("payoff") + "'");
  }
  if (kind == PayoffKind::call_on_p) c.terms.kind = OptionKind::call;
  if (kind == PayoffKind::put_on_p) c.terms.kind = OptionKind::put;
  validate(c.terms);
  c.payoff = kind ? Payoff{*kind, c.terms.strike, {}} : Payoff::vanilla(c.terms);
  c.p0 = pf.number("p0");
  c.v0 = pf.number("v0", 1.0);
  if (!(c.p0 > 0.0) || !(c.v0 > 0.0)) throw InvalidInput("p0 and v0 must be > 0");
  return c;
}

// ---------------------------------------------------------------- pricing

[[noreturn]] void unsupported(const std::string& model, const std::string& method,
                              const std::string& why) {
  throw InvalidInput("model '" + model + "' does not support method '" + method + "': " + why);
}

double closed_form_on_p(double p, const PricingTerms& terms, const Payoff& payoff, double sigma,
                        const std::string& model) {
  if (payoff.kind == PayoffKind::forward_on_p) return p - terms.strike * std::exp(-terms.r * terms.tau);
  if (!payoff.on_price_only()) unsupported(model, "closed-form", "payoff must be on p");
  return bsm_closed_form(p, terms, sigma);
}

double closed_form_price(const LoadedModel& m, const Contract& c) {
  const PricingTerms& t = c.terms;
  if (const auto* b = std::get_if<BsmModel>(&m.model)) return closed_form_on_p(c.p0, t, c.payoff, b->sigma, m.name);
  if (const auto* tf = std::get_if<TwoFactorModel>(&m.model)) {
    if (c.payoff.kind == PayoffKind::claim_pv)
      return linear_payoff_exact(c.p0, c.v0, t, tf->params, LinearPayoff::value_claim);
    const double sigma = std::sqrt(derived_price_dynamics(tf->params).sigma_sq);
    return closed_form_on_p(c.p0, t, c.payoff, sigma, m.name);
  }
  if (const auto* e = std::get_if<ExpectationsModel>(&m.model)) {
    const double sigma = std::sqrt(derived_expectation_dynamics(e->params).sigma_p_sq);
    return closed_form_on_p(c.p0, t, c.payoff, sigma, m.name);
  }
  if (const auto* nl = std::get_if<NonlinearModel>(&m.model)) {
    const auto* amp = std::get_if<ConstantAmplitude>(&nl->params.amplitude);
    if (!amp) unsupported(m.name, "closed-form", "only a constant amplitude has a closed form");
    return closed_form_on_p(c.p0, t, c.payoff, std::abs(amp->c) * nl->params.sigma, m.name);
  }
  if (const auto* h = std::get_if<HestonModel>(&m.model)) {
    if (c.payoff.kind == PayoffKind::forward_on_p) return c.p0 - t.strike * std::exp(-t.r * t.tau);
    if (!c.payoff.on_price_only()) unsupported(m.name, "closed-form", "payoff must be on p");
    return heston_cf_price(c.p0, t, h->params, m.x0);
  }
  unsupported(m.name, "closed-form", "no closed form exists; use pde or mc");
}

double width_default(double vol, double tau, double mult) {
  return std::clamp(mult * vol * std::sqrt(tau), 0.3, 2.0);
}

Axis price_axis(const ParamFile& pf, double p0, double vol, double tau, std::size_t n, double mult) {
  return log_axis("p", p0, pf.number("p_width", width_default(vol, tau, mult)), pf.count("n_p", n));
}

Axis volume_axis(const ParamFile& pf, double v0, double sigma_v, double tau, std::size_t n) {
  return log_axis("V", v0, pf.number("v_width", width_default(sigma_v, tau, 5.0)), pf.count("n_v", n));
}

Axis variance_axis(const ParamFile& pf, double x0, double theta, std::size_t n) {
  return linear_axis("x", 0.0, pf.number("x_max", std::max(0.5, 6.0 * std::max(x0, theta))),
                     pf.count("n_x", n));
}

double amplitude_scale(const Amplitude& amp) {
  if (const auto* c = std::get_if<ConstantAmplitude>(&amp)) return std::abs(c->c);
  if (const auto* r = std::get_if<RationalAmplitude>(&amp)) return std::abs(r->a);
  const auto& t = std::get<TabulatedAmplitude>(amp);
  return t.a.empty() ? 1.0 : *std::max_element(t.a.begin(), t.a.end());
}

struct PdeRun {
  Surface surface;
  std::vector<double> spot;
};

PdeRun run_pde(const LoadedModel& m, const Contract& c, const ParamFile& pf, bool store_all) {
  const PricingTerms& t = c.terms;
  if (!(t.tau > 0.0)) throw InvalidInput("pde method needs tau > 0");
  SolverOptions opts;
  opts.store_all_slices = store_all;
  opts.target_tolerance = pf.number("target_tolerance", 0.0);
  const std::size_t n_t_default = 200;
  PdeRun run;
  if (const auto* b = std::get_if<BsmModel>(&m.model)) {
    const Grid g = make_grid({price_axis(pf, c.p0, b->sigma, t.tau, 401, 5.0)}, t.tau, pf.count("n_t", n_t_default));
    run.surface = solve_bsm_1d(b->sigma, t, c.payoff, g, opts);
    run.spot = {c.p0};
  } else if (const auto* tf = std::get_if<TwoFactorModel>(&m.model)) {
    const double vol = std::sqrt(derived_price_dynamics(tf->params).sigma_sq);
    const Grid g = make_grid({price_axis(pf, c.p0, vol, t.tau, 201, 5.0),
                              volume_axis(pf, c.v0, tf->params.sigma_v, t.tau, 21)},
                             t.tau, pf.count("n_t", n_t_default));
    run.surface = solve_two_factor_2d(tf->params, t, c.payoff, g, opts);
    run.spot = {c.p0, c.v0};
  } else if (const auto* e = std::get_if<ExpectationsModel>(&m.model)) {
    const double vol = std::sqrt(derived_expectation_dynamics(e->params).sigma_p_sq);
    std::vector<Axis> axes{price_axis(pf, c.p0, vol, t.tau, 16, 2.5)};
    const std::size_t n_x = pf.count("n_x", 16);
    const std::optional<double> width = pf.has("x_width") ? std::optional(pf.number("x_width")) : std::nullopt;
    for (std::size_t j = 0; j < 3; ++j) {
      const double w = width.value_or(std::max(0.1, 4.0 * e->params.sigma[j] * std::sqrt(t.tau)));
      axes.push_back(linear_axis("x" + std::to_string(j + 1), m.xs[j] - w, m.xs[j] + w, n_x));
    }
    const Grid g = make_grid(std::move(axes), t.tau, pf.count("n_t", 1));
    run.surface = solve_expectation_4d(e->params, t, c.payoff, g, opts);
    run.spot = {c.p0, m.xs[0], m.xs[1], m.xs[2]};
  } else if (const auto* nl = std::get_if<NonlinearModel>(&m.model)) {
    const double vol = nl->params.sigma * amplitude_scale(nl->params.amplitude);
    const Grid g = make_grid({price_axis(pf, c.p0, vol, t.tau, 401, 5.0)}, t.tau, pf.count("n_t", n_t_default));
    run.surface = solve_nonlinear_1d(nl->params, t, c.payoff, g, pf.number("picard_tol", 1e-8),
                                     pf.count("picard_max", 15), opts);
    run.spot = {c.p0};
  } else if (const auto* h = std::get_if<HestonModel>(&m.model)) {
    const double vol = std::sqrt(std::max(m.x0, h->params.theta_x));
    const Grid g = make_grid({price_axis(pf, c.p0, vol, t.tau, 161, 5.0),
                              variance_axis(pf, m.x0, h->params.theta_x, 81)},
                             t.tau, pf.count("n_t", n_t_default));
    run.surface = solve_heston_2d(h->params, t, c.payoff, g, opts);
    run.spot = {c.p0, m.x0};
  } else {
    const auto& s = std::get<StochVol3dModel>(m.model);
    const double vol = std::sqrt(std::max(m.x0, s.sv.theta_x) + s.params.sigma_v * s.params.sigma_v);
    const Grid g = make_grid({price_axis(pf, c.p0, vol, t.tau, 64, 5.0),
                              volume_axis(pf, c.v0, s.params.sigma_v, t.tau, 10),
                              variance_axis(pf, m.x0, s.sv.theta_x, 32)},
                             t.tau, pf.count("n_t", 100));
    run.surface = solve_stochvol_3d(s.params, s.sv, t, c.payoff, g, opts);
    run.spot = {c.p0, c.v0, m.x0};
  }
  if (!run.surface.contains(run.spot, t.tau))
    throw InvalidInput("the initial state lies outside the solver grid");
  return run;
}

std::vector<std::string> axis_names(const Surface& s) {
  std::vector<std::string> names;
  for (const Axis& a : s.grid.axes) names.push_back(a.name);
  return names;
}

void write_surface_text(std::ostream& os, const Surface& s) {
  for (const auto& n : axis_names(s)) os << n << ',';
  os << "price\n";
  const auto& values = s.values();
  for (std::size_t node = 0; node < s.node_count(); ++node) {
    for (double x : s.spot_coordinates(node, s.tau)) os << full(x) << ',';
    os << full(values[node]) << '\n';
  }
}

json surface_json(const Surface& s) {
  json rows = json::array();
  const auto& values = s.values();
  for (std::size_t node = 0; node < s.node_count(); ++node) {
    json row = json::array();
    for (double x : s.spot_coordinates(node, s.tau)) row.push_back(x);
    row.push_back(number_or_null(values[node]));
    rows.push_back(std::move(row));
  }
  return json{{"axes", axis_names(s)}, {"rows", std::move(rows)}};
}

json meta_json(const SurfaceMeta& m) {
  json j{{"scheme", m.scheme},
         {"time_steps", m.time_steps},
         {"notices", m.notices},
         {"accuracy_flag", m.accuracy_flag},
         {"error_estimate", m.error_estimate}};
  if (m.model == "nonlinear") {
    j["converged"] = m.converged;
    j["picard_iterations"] = m.picard_iterations;
    j["final_residual"] = m.final_residual;
  }
  return j;
}

void report_notices(Io& io, const SurfaceMeta& m) {
  for (const auto& n : m.notices) io.err << "note: " << n << '\n';
  if (!m.non_psd_nodes.empty())
    io.err << "note: local diffusion matrix not PSD at " << m.non_psd_nodes.size() << " node(s)\n";
}

/// Exit code for a finished surface; messages go to stderr.
int surface_status(Io& io, const SurfaceMeta& m) {
  int code = kExitOk;
  if (!m.converged) {
    io.err << "warning: Picard iteration did not converge\n";
    code = kExitFlagged;
  }
  if (m.accuracy_flag) {
    io.err << "warning: estimated error " << human(m.error_estimate) << " exceeds target_tolerance\n";
    code = kExitFlagged;
  }
  return code;
}

int cmd_price(const RunConfig& cfg, Io& io) {
  if (cfg.method != "pde" && cfg.method != "mc" && cfg.method != "closed-form" && cfg.method != "closed_form")
    throw InvalidInput("unknown method '" + cfg.method + "' (pde, mc, closed-form)");
  if (cfg.model == "nonlinear" && cfg.method == "mc")
    unsupported(cfg.model, "mc", "the feedback drift depends on the unknown option price");
  const ParamFile pf = ParamFile::load(cfg.params_path);
  const LoadedModel m = load_model(cfg.model, pf);
  const Contract c = read_contract(pf);

  if (cfg.method == "closed-form" || cfg.method == "closed_form") {
    pf.check_all_used("price/closed-form");
    const double price = closed_form_price(m, c);
    if (io.format == Format::json) {
      io.data() << json{{"model", m.name}, {"method", "closed-form"}, {"price", price}}.dump() << '\n';
    } else {
      io.data() << "model,method,price\n" << m.name << ",closed-form," << price_text(price) << '\n';
    }
    return kExitOk;
  }

  if (cfg.method == "mc") {
    const bool heavy = m.name == "heston" || m.name == "stochvol-3d";
    SimConfig sc;
    sc.n_paths = pf.count("n_paths", 100000);
    sc.n_steps = pf.count("n_steps", heavy ? static_cast<std::size_t>(std::max(1.0, std::ceil(252.0 * c.terms.tau))) : 1);
    sc.antithetic = pf.flag("antithetic", false);
    sc.seed = cfg.seed;
    pf.check_all_used("price/mc");
    McState init;
    init.p0 = c.p0;
    init.v0 = c.v0;
    init.x0 = m.x0;
    init.xs = {m.xs[0], m.xs[1], m.xs[2]};
    const McResult r = price_mc(m.model, c.payoff, c.terms, init, sc);
    if (io.format == Format::json) {
      io.data() << json{{"model", m.name},     {"method", "mc"},         {"price", r.price},
                        {"std_error", r.std_error}, {"n_paths", r.n_paths}, {"n_steps", sc.n_steps},
                        {"antithetic", sc.antithetic}, {"seed", r.seed}}
                       .dump()
                << '\n';
    } else {
      io.data() << "model,method,price,std_error,n_paths,seed\n"
                << m.name << ",mc," << price_text(r.price) << ',' << human(r.std_error) << ','
                << r.n_paths << ',' << r.seed << '\n';
    }
    return kExitOk;
  }

  PdeRun run = run_pde(m, c, pf, false);
  pf.check_all_used("price/pde");
  const Surface& s = run.surface;
  const double price = s.value_at(run.spot);
  report_notices(io, s.meta);

  if (io.format == Format::json) {
    json scalar{{"model", m.name}, {"method", "pde"}, {"price", price}, {"meta", meta_json(s.meta)}};
    json doc = scalar;
    doc["surface"] = surface_json(s);
    io.data() << doc.dump() << '\n';
    if (io.to_file()) io.out << scalar.dump() << '\n';
  } else {
    write_surface_text(io.data(), s);
    if (io.to_file())
      io.out << "model,method,price\n" << m.name << ",pde," << price_text(price) << '\n';
    else
      io.err << "price at initial state: " << price_text(price) << '\n';
  }
  return surface_status(io, s.meta);
}

// ---------------------------------------------------------------- simulate

int cmd_simulate(const RunConfig& cfg, Io& io) {
  const ParamFile pf = ParamFile::load(cfg.params_path);
  const LoadedModel m = load_model(cfg.model, pf);

  SimConfig sc;
  std::optional<Contract> contract;
  if (m.name == "nonlinear") {
    contract = read_contract(pf);
    sc.horizon = pf.number("horizon", contract->terms.tau);
  } else {
    sc.horizon = pf.number("horizon", 1.0);
  }
  sc.n_paths = pf.count("n_paths", 1);
  sc.n_steps = pf.count("n_steps", static_cast<std::size_t>(std::max(1.0, std::round(252.0 * sc.horizon))));
  sc.antithetic = pf.flag("antithetic", false);
  sc.seed = cfg.seed;

  PathBundle paths;
  if (contract) {
    PdeRun run = run_pde(m, *contract, pf, true);
    pf.check_all_used("simulate/nonlinear");
    report_notices(io, run.surface.meta);
    paths = simulate_feedback_price(std::get<NonlinearModel>(m.model).params, run.surface, contract->p0, sc);
    if (paths.truncated_count > 0)
      io.err << "note: " << paths.truncated_count << " path(s) left the price grid and were frozen\n";
  } else {
    const double p0 = pf.number("p0", 1.0);
    const double v0 = pf.number("v0", 1.0);
    if (!(p0 > 0.0) || !(v0 > 0.0)) throw InvalidInput("p0 and v0 must be > 0");
    pf.check_all_used("simulate/" + m.name);
    const double c0 = p0 * v0;
    if (const auto* b = std::get_if<BsmModel>(&m.model)) {
      paths = simulate_two_factor(TwoFactorParams{m.drift, b->sigma, 0.0, 0.0, 0.0}, c0, v0, sc);
    } else if (const auto* tf = std::get_if<TwoFactorModel>(&m.model)) {
      paths = simulate_two_factor(tf->params, c0, v0, sc);
    } else if (const auto* e = std::get_if<ExpectationsModel>(&m.model)) {
      paths = simulate_expectation_model(e->params, c0, v0, m.xs, sc);
    } else if (const auto* h = std::get_if<HestonModel>(&m.model)) {
      paths = simulate_stochvol_model(TwoFactorParams{m.drift, 0.0, 0.0, 0.0, 0.0}, h->params, c0, v0,
                                      m.x0, 0.0, sc);
    } else {
      const auto& s = std::get<StochVol3dModel>(m.model);
      paths = simulate_stochvol_model(s.params, s.sv, c0, v0, m.x0, m.y0, sc);
    }
  }

  std::ostream& os = io.data();
  if (io.format == Format::json) {
    json all = json::array();
    for (std::size_t i = 0; i < paths.n_paths; ++i) {
      json rows = json::array();
      for (std::size_t k = 0; k < paths.n_times(); ++k) {
        json row = json::array();
        for (std::size_t j = 0; j < paths.n_coords(); ++j) row.push_back(number_or_null(paths.at(i, k, j)));
        rows.push_back(std::move(row));
      }
      all.push_back(std::move(rows));
    }
    os << json{{"model", m.name},    {"seed", sc.seed},   {"labels", paths.labels},
               {"times", paths.times}, {"paths", std::move(all)}, {"truncated", paths.truncated}}
              .dump()
       << '\n';
  } else {
    os << "path,t";
    for (const auto& l : paths.labels) os << ',' << l;
    os << '\n';
    for (std::size_t i = 0; i < paths.n_paths; ++i)
      for (std::size_t k = 0; k < paths.n_times(); ++k) {
        os << i << ',' << full(paths.times[k]);
        for (std::size_t j = 0; j < paths.n_coords(); ++j) os << ',' << full(paths.at(i, k, j));
        os << '\n';
      }
  }
  return kExitOk;
}

// ---------------------------------------------------------------- market data

AggregatedSeries load_series(const RunConfig& cfg, Io& io, const ParamFile* pf) {
  if (!(cfg.t2 > 0.0) || !std::isfinite(cfg.t2)) throw InvalidInput("--t2 must be > 0");
  IngestReport rep = ingest_file(cfg.input_path);
  constexpr std::size_t kShown = 20;
  std::size_t shown = 0;
  for (const auto* list : {&rep.malformed, &rep.rejected})
    for (const IngestIssue& issue : *list)
      if (shown++ < kShown) io.err << cfg.input_path << ":" << issue.line << ": " << issue.message << '\n';
  if (!rep.malformed.empty() || !rep.rejected.empty())
    io.err << "ingest: " << rep.records.size() << " of " << rep.data_rows << " rows used, "
           << rep.malformed.size() << " malformed, " << rep.rejected.size() << " rejected\n";
  AggregationConfig ac;
  ac.t2 = cfg.t2;
  if (pf) ac.origin = pf->number("origin", 0.0);
  AggregatedSeries series = aggregate_vwap(std::move(rep.records), ac);
  if (series.dropped_before_origin > 0)
    io.err << "note: " << series.dropped_before_origin << " tick(s) before the origin were dropped\n";
  return series;
}

int cmd_aggregate(const RunConfig& cfg, Io& io) {
  std::optional<ParamFile> pf;
  if (!cfg.params_path.empty()) pf = ParamFile::load(cfg.params_path);
  const AggregatedSeries series = load_series(cfg, io, pf ? &*pf : nullptr);
  if (pf) pf->check_all_used("aggregate");
  const GapSummary gap = vwap_gap(series);
  const auto gaps = std::count_if(series.windows.begin(), series.windows.end(), [](const Window& w) { return w.gap(); });
  io.err << "windows: " << series.windows.size() << " (" << gaps << " empty); vwap gap max "
         << human(gap.max) << ", mean " << human(gap.mean) << '\n';

  if (io.format == Format::json) {
    json windows = json::array();
    for (std::size_t i = 0; i < series.windows.size(); ++i) {
      const Window& w = series.windows[i];
      windows.push_back({{"start", w.start},
                         {"end", w.end},
                         {"sum_value", w.sum_c},
                         {"sum_volume", w.sum_v},
                         {"vwap", number_or_null(w.vwap)},
                         {"simple_avg", number_or_null(w.simple_avg)},
                         {"n_ticks", w.n_ticks},
                         {"gap", number_or_null(gap.gap[i])}});
    }
    io.data() << json{{"t2", cfg.t2}, {"windows", std::move(windows)}, {"gap_max", gap.max}, {"gap_mean", gap.mean}}.dump()
              << '\n';
  } else {
    write_series_csv(io.data(), series);
  }
  return kExitOk;
}

int cmd_calibrate(const RunConfig& cfg, Io& io) {
  const ParamFile pf = ParamFile::load(cfg.params_path);
  const double annualization = pf.number("annualization");
  const AggregatedSeries series = load_series(cfg, io, &pf);
  pf.check_all_used("calibrate");
  const CalibrationResult r = calibrate_two_factor(series, annualization);
  io.err << "calibration: " << r.n_obs << " increments from windows [" << r.run_start << ", "
         << r.run_start + r.run_length << ")\n";
  if (r.lambda_clipped) io.err << "warning: lambda estimate clipped to [-1, 1]\n";
  if (!r.lambda_defined) io.err << "warning: lambda undefined (a series has zero variance); reported as 0\n";

  const std::array<std::pair<const char*, std::pair<double, double>>, 5> rows{{
      {"mu_c", {r.mu_c, r.se.mu_c}},
      {"sigma_c", {r.sigma_c, r.se.sigma_c}},
      {"mu_v", {r.mu_v, r.se.mu_v}},
      {"sigma_v", {r.sigma_v, r.se.sigma_v}},
      {"lambda", {r.lambda, r.se.lambda}},
  }};
  if (io.format == Format::json) {
    json est, se;
    for (const auto& [name, v] : rows) {
      est[name] = v.first;
      se[name] = number_or_null(v.second);
    }
    io.data() << json{{"estimates", est},           {"std_errors", se},
                      {"n_obs", r.n_obs},           {"run_start", r.run_start},
                      {"run_length", r.run_length}, {"lambda_clipped", r.lambda_clipped},
                      {"lambda_defined", r.lambda_defined}, {"annualization", annualization}}
                     .dump()
              << '\n';
  } else {
    io.data() << "parameter,estimate,std_error\n";
    for (const auto& [name, v] : rows) io.data() << name << ',' << human(v.first) << ',' << human(v.second) << '\n';
  }
  return kExitOk;
}

// ---------------------------------------------------------------- verify

int cmd_verify(const RunConfig& cfg, Io& io) {
  if (!(cfg.tolerance_scale > 0.0) || !std::isfinite(cfg.tolerance_scale))
    throw InvalidInput("--tolerance-scale must be > 0");
  VerifyOptions opts;
  opts.tolerance_scale = cfg.tolerance_scale;
  opts.seed = cfg.seed;
  opts.only = cfg.criteria;
  for (int id : opts.only)
    if (id < 1 || id > 11) throw InvalidInput("--criteria entries must be in 1..11");

  const bool text = io.format == Format::text;
  const auto results = run_acceptance(opts, [&](const CriterionResult& r) {
    if (text) {
      print_criterion(io.data(), r);
      io.data().flush();
    }
  });

  std::size_t passed = 0;
  for (const auto& r : results) passed += r.passed() ? 1 : 0;
  if (text) {
    io.data() << passed << " of " << results.size() << " criteria passed (tolerance scale "
              << human(cfg.tolerance_scale) << ")\n";
  } else {
    json list = json::array();
    for (const auto& r : results) {
      json checks = json::array();
      for (const Check& c : r.checks)
        checks.push_back({{"name", c.name},
                          {"measured", number_or_null(c.measured)},
                          {"tolerance", c.scalable ? c.tolerance * cfg.tolerance_scale : c.tolerance},
                          {"passed", c.passed}});
      json item{{"id", r.id}, {"title", r.title}, {"passed", r.passed()}, {"seconds", r.seconds}, {"checks", checks}};
      if (!r.error.empty()) item["error"] = r.error;
      list.push_back(std::move(item));
    }
    io.data() << json{{"tolerance_scale", cfg.tolerance_scale}, {"seed", cfg.seed}, {"criteria", list},
                      {"passed", passed}, {"total", results.size()}}
                     .dump()
              << '\n';
  }
  for (const auto& r : results)
    if (!r.passed())
      io.err << "verify: criterion " << r.id << " failed: " << r.title
             << (r.error.empty() ? "" : " (" + r.error + ")") << '\n';
  return passed == results.size() ? kExitOk : kExitVerifyFailed;
}

// ---------------------------------------------------------------- driver

void open_output(const RunConfig& cfg, Io& io) {
  if (cfg.out_path.empty()) return;
  const std::filesystem::path p(cfg.out_path);
  const auto dir = p.has_parent_path() ? p.parent_path() : std::filesystem::path(".");
  if (!std::filesystem::is_directory(dir))
    throw InvalidInput("output directory '" + dir.string() + "' does not exist");
  io.file.open(p, std::ios::binary | std::ios::trunc);
  if (!io.file) throw InvalidInput("cannot open output file '" + cfg.out_path + "'");
}

void require_readable(const std::string& path, const char* what) {
  if (!std::filesystem::is_regular_file(path))
    throw InvalidInput(std::string(what) + " '" + path + "' does not exist");
}

int dispatch(const RunConfig& cfg, Io& io) {
  io.format = parse_format(cfg.format);
  if (!cfg.params_path.empty()) require_readable(cfg.params_path, "parameter file");
  if (!cfg.input_path.empty()) require_readable(cfg.input_path, "input file");
  open_output(cfg, io);
  int code = kExitOk;
  if (cfg.command == "price") code = cmd_price(cfg, io);
  else if (cfg.command == "simulate") code = cmd_simulate(cfg, io);
  else if (cfg.command == "aggregate") code = cmd_aggregate(cfg, io);
  else if (cfg.command == "calibrate") code = cmd_calibrate(cfg, io);
  else code = cmd_verify(cfg, io);
  io.data().flush();
  if (!io.data()) throw NumericError("failed writing output");
  return code;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  CLI::App app{"Option pricing and market-data tools for the value/volume price model", "cvp"};
  app.require_subcommand(1);

  auto* price = app.add_subcommand("price", "Price a contract (pde, mc or closed-form)");
  auto* simulate = app.add_subcommand("simulate", "Simulate model paths under the physical measure");
  auto* aggregate = app.add_subcommand("aggregate", "Aggregate a tick file into VWAP windows");
  auto* calibrate = app.add_subcommand("calibrate", "Calibrate two-factor parameters from a tick file");
  auto* verify = app.add_subcommand("verify", "Run the acceptance suite");

  const std::string models = "bsm, two-factor, expectations, nonlinear, heston, stochvol-3d";
  for (auto* sc : {price, simulate}) {
    sc->add_option("--model", cfg.model, models)->required();
    sc->add_option("--params", cfg.params_path, "Parameter file (key = value)")->required();
    sc->add_option("--seed", cfg.seed, "RNG seed");
  }
  price->add_option("--method", cfg.method, "pde, mc or closed-form")->required();
  for (auto* sc : {aggregate, calibrate}) {
    sc->add_option("input", cfg.input_path, "Tick file (timestamp,value,volume)")->required();
    sc->add_option("--t2", cfg.t2, "Window length in the tick time unit")->required();
  }
  aggregate->add_option("--params", cfg.params_path, "Optional parameter file (origin)");
  calibrate->add_option("--params", cfg.params_path, "Parameter file (annualization, origin)")->required();
  verify->add_option("--tolerance-scale", cfg.tolerance_scale, "Multiply every accuracy tolerance");
  verify->add_option("--seed", cfg.seed, "RNG seed for the Monte Carlo checks");
  verify->add_option("--criteria", cfg.criteria, "Run only these criteria (1..11)")->delimiter(',');
  for (auto* sc : {price, simulate, aggregate, calibrate, verify}) {
    sc->add_option("--out", cfg.out_path, "Write data here instead of stdout");
    sc->add_option("--format", cfg.format, "text (delimited) or json (structured)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInvalid;
  }
  for (auto* sc : app.get_subcommands()) cfg.command = sc->get_name();

  Io io{out, err, {}, Format::text};
  try {
    return dispatch(cfg, io);
  } catch (const InvalidInput& e) {
    err << "error: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const InsufficientData& e) {
    err << "error: " << e.what() << '\n';
    return kExitFlagged;
  } catch (const NumericError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitNumeric;
  }
}

}  // namespace cvp::cli

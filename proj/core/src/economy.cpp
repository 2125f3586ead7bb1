#include "borderlab/economy.hpp"

#include "borderlab/error.hpp"
#include "borderlab/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace borderlab::economy {

namespace {

bool finite_all(std::initializer_list<double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

int sign_of(double x) { return (x > 0.0) - (x < 0.0); }

EquilibriumState at_allocation(const EconomyParams& p, double informal, double formal_low, double high,
                               double price_level) {
  EquilibriumState s;
  s.labor_informal = informal;
  s.labor_formal_low = formal_low;
  s.labor_high = high;
  s.output = price_level * std::pow(high, p.alpha) * std::pow(formal_low, p.beta) *
             std::pow(informal, p.informal_elasticity());
  s.wage_informal = p.informal_elasticity() * s.output / informal;
  s.wage_formal_low = p.beta * s.output / formal_low;
  s.wage_high = p.alpha * s.output / high;
  return s;
}

}  // namespace

void EconomyParams::validate() const {
  if (!finite_all({alpha, beta, l_bar, h_bar, informal_share}))
    throw DomainError("economy: parameters must be finite");
  if (!(alpha > 0.0)) throw DomainError("economy: alpha must be > 0");
  if (!(beta > 0.0)) throw DomainError("economy: beta must be > 0");
  if (!(alpha + beta < 1.0)) throw DomainError("economy: alpha + beta must be < 1");
  if (!(l_bar > 0.0)) throw DomainError("economy: l_bar must be > 0");
  if (!(h_bar > 0.0)) throw DomainError("economy: h_bar must be > 0");
  if (!(informal_share > 0.0 && informal_share < 1.0))
    throw DomainError("economy: informal_share must lie in (0, 1)");
}

ImmigrationShock ImmigrationShock::from_absorption(double eta, double mu, double informal_share) {
  ImmigrationShock s;
  s.eta = eta;
  s.mu = mu;
  s.delta = implied_delta(eta, mu, informal_share);
  return s;
}

void ImmigrationShock::validate(const EconomyParams& params) const {
  if (!finite_all({eta, mu})) throw DomainError("shock: eta and mu must be finite");
  if (eta < 0.0) throw DomainError("shock: eta must be >= 0");
  if (mu < 0.0) throw DomainError("shock: mu must be >= 0");
  if (delta) {
    if (!(*delta > 0.0 && *delta < 1.0)) throw DomainError("shock: delta must lie in (0, 1)");
    const double implied = implied_delta(eta, mu, params.informal_share);
    if (std::abs((1.0 + *delta) - (1.0 + implied)) > 1e-12)
      throw DomainError("shock: delta inconsistent with eta, mu and informal_share");
  }
}

double implied_delta(double eta, double mu, double informal_share) {
  if (eta < 0.0 || mu < 0.0) throw DomainError("implied_delta: eta and mu must be >= 0");
  if (!(informal_share > 0.0 && informal_share < 1.0))
    throw DomainError("implied_delta: informal_share must lie in (0, 1)");
  return (1.0 + eta) * (1.0 - informal_share) + (1.0 + mu) * informal_share - 1.0;
}

EquilibriumState solve_baseline(const EconomyParams& params, double price_level) {
  params.validate();
  if (!(price_level > 0.0) || !std::isfinite(price_level)) throw DomainError("economy: price level must be > 0");
  const double informal = params.informal_share * params.l_bar;
  const double formal_low = (1.0 - params.informal_share) * params.l_bar;
  return at_allocation(params, informal, formal_low, params.h_bar, price_level);
}

EquilibriumState solve_shocked(const EconomyParams& params, const ImmigrationShock& shock, double price_level) {
  shock.validate(params);
  const EquilibriumState base = solve_baseline(params, price_level);
  return at_allocation(params, (1.0 + shock.mu) * base.labor_informal, (1.0 + shock.eta) * base.labor_formal_low,
                       base.labor_high, price_level);
}

WageMultipliers shock_multipliers(const EconomyParams& params, const ImmigrationShock& shock) {
  params.validate();
  shock.validate(params);
  const double a = params.alpha;
  const double b = params.beta;
  const double formal = 1.0 + shock.eta;
  const double informal = 1.0 + shock.mu;
  WageMultipliers m;
  m.informal = std::pow(formal, b) / std::pow(informal, a + b);
  m.formal_low = std::pow(informal, 1.0 - a - b) / std::pow(formal, 1.0 - b);
  m.high = std::pow(formal, b) * std::pow(informal, 1.0 - a - b);
  return m;
}

double foc_residual(const EconomyParams& p, const EquilibriumState& s) {
  const double ri = std::abs(s.wage_informal - p.informal_elasticity() * s.output / s.labor_informal) /
                    std::max(1.0, s.wage_informal);
  const double rl = std::abs(s.wage_formal_low - p.beta * s.output / s.labor_formal_low) /
                    std::max(1.0, s.wage_formal_low);
  const double rh = std::abs(s.wage_high - p.alpha * s.output / s.labor_high) / std::max(1.0, s.wage_high);
  return std::max({ri, rl, rh});
}

ComparativeStaticsReport comparative_statics_report(const EconomyParams& params, const ImmigrationShock& shock,
                                                    double price_level) {
  ComparativeStaticsReport r;
  r.baseline = solve_baseline(params, price_level);
  r.shocked = solve_shocked(params, shock, price_level);
  r.multipliers = shock_multipliers(params, shock);
  r.sign_informal = sign_of(r.multipliers.informal - 1.0);
  r.sign_formal_low = sign_of(r.multipliers.formal_low - 1.0);
  r.sign_high = sign_of(r.multipliers.high - 1.0);
  r.mu_exceeds_eta = shock.mu > shock.eta;
  r.informal_claim_contradicted = r.mu_exceeds_eta && r.multipliers.informal < 1.0;
  return r;
}

std::string ComparativeStaticsReport::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "scenario,w_i,w_l,w_h,m_i,m_l,m_h\n";
  os << "baseline," << baseline.wage_informal << ',' << baseline.wage_formal_low << ',' << baseline.wage_high
     << ",1,1,1\n";
  os << "shocked," << shocked.wage_informal << ',' << shocked.wage_formal_low << ',' << shocked.wage_high << ','
     << multipliers.informal << ',' << multipliers.formal_low << ',' << multipliers.high << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Border town
// ---------------------------------------------------------------------------

void BorderTownParams::validate() const {
  if (!finite_all({phi, psi, tau, nu, rho, delta_penalty})) throw DomainError("border town: parameters must be finite");
  if (!(phi > 0.0)) throw DomainError("border town: phi must be > 0");
  if (!(psi > 0.0)) throw DomainError("border town: psi must be > 0");
  if (!(tau >= 0.0)) throw DomainError("border town: tau must be >= 0");
  if (!(nu > 0.0 && nu < 1.0)) throw DomainError("border town: nu must lie in (0, 1)");
  if (!(rho > 0.0 && rho < 1.0)) throw DomainError("border town: rho must lie in (0, 1)");
  if (!(delta_penalty > 0.0 && delta_penalty < 1.0))
    throw DomainError("border town: delta_penalty must lie in (0, 1)");
}

namespace {

// Effective labor supplied by households; refugees work at rho with productivity delta.
double effective_supply(const BorderTownParams& p, bool with_refugees) {
  return p.nu + (with_refugees ? p.delta_penalty * p.rho : 0.0);
}

}  // namespace

double border_town_labor_residual(const BorderTownParams& p, bool with_refugees, double wage) {
  return p.psi / wage + p.phi / (wage * (1.0 + p.tau)) - effective_supply(p, with_refugees);
}

BorderTownEquilibrium solve_border_town(const BorderTownParams& p, bool with_refugees) {
  p.validate();
  BorderTownEquilibrium e;
  e.with_refugees = with_refugees;
  const double native_only_wage = p.phi / (p.nu * (1.0 + p.tau)) + p.psi / p.nu;
  e.wage = with_refugees ? (p.nu / (p.delta_penalty * p.rho + p.nu)) * native_only_wage : native_only_wage;
  e.native_labor = p.nu;
  e.refugee_labor = with_refugees ? p.rho : 0.0;
  e.effective_informal_labor = p.psi / e.wage;
  e.effective_formal_labor = p.phi / (e.wage * (1.0 + p.tau));
  e.output_informal = p.psi * std::log(e.effective_informal_labor);
  e.output_formal = p.phi * std::log(e.effective_formal_labor);
  e.native_consumption = e.wage * p.nu;
  e.refugee_consumption = with_refugees ? p.delta_penalty * e.wage * p.rho : 0.0;
  e.transfer = e.wage * p.tau;
  e.goods_market_residual =
      e.output_informal + e.output_formal - (e.native_consumption + e.refugee_consumption);
  return e;
}

double border_town_wage_by_bisection(const BorderTownParams& p, bool with_refugees) {
  p.validate();
  return numerics::bisect_root([&](double w) { return border_town_labor_residual(p, with_refugees, w); }, 1e-8, 1e8,
                               1e-12);
}

}  // namespace borderlab::economy

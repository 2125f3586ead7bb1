#pragma once

#include <optional>
#include <string>
#include <vector>

namespace borderlab::economy {

/// National three-input economy: Y = H^alpha L^beta I^(1 - alpha - beta).
struct EconomyParams {
  double alpha = 0.3;            // elasticity of high-skilled labor
  double beta = 0.4;             // elasticity of formal low-skilled labor
  double l_bar = 1.0;            // low-skilled endowment
  double h_bar = 1.0;            // high-skilled endowment
  double informal_share = 0.45;  // baseline I / l_bar

  double informal_elasticity() const { return 1.0 - alpha - beta; }
  void validate() const;
};

/// Immigration shock. `delta` is optional; when supplied it must agree with
/// (1 + eta)(1 - s_I) + (1 + mu) s_I - 1 for the economy it is applied to.
struct ImmigrationShock {
  double eta = 0.0;  // growth of formal low-skilled labor
  double mu = 0.0;   // growth of informal labor
  std::optional<double> delta;

  static ImmigrationShock from_absorption(double eta, double mu, double informal_share);
  void validate(const EconomyParams& params) const;
};

struct EquilibriumState {
  double output = 0.0;
  double labor_informal = 0.0;
  double labor_formal_low = 0.0;
  double labor_high = 0.0;
  double wage_informal = 0.0;
  double wage_formal_low = 0.0;
  double wage_high = 0.0;
};

struct WageMultipliers {
  double informal = 1.0;
  double formal_low = 1.0;
  double high = 1.0;
};

/// Baseline allocation I = s_I l_bar, L = (1 - s_I) l_bar, H = h_bar with wages
/// from the firm's first-order conditions. `price_level` scales output (1 keeps
/// the raw Cobb-Douglas value).
EquilibriumState solve_baseline(const EconomyParams& params, double price_level = 1.0);

/// Equilibrium at the post-shock allocation I' = (1 + mu) I, L' = (1 + eta) L.
EquilibriumState solve_shocked(const EconomyParams& params, const ImmigrationShock& shock, double price_level = 1.0);

/// Closed-form wage multipliers w'/w for the informal, formal low-skilled and
/// high-skilled inputs.
WageMultipliers shock_multipliers(const EconomyParams& params, const ImmigrationShock& shock);

/// Population growth implied by sector absorption rates: (1+eta)(1-s_I) + (1+mu)s_I - 1.
double implied_delta(double eta, double mu, double informal_share);

/// Largest absolute first-order-condition residual, each scaled by max(1, wage).
double foc_residual(const EconomyParams& params, const EquilibriumState& state);

// ---------------------------------------------------------------------------
// Comparative statics
// ---------------------------------------------------------------------------

struct ComparativeStaticsReport {
  EquilibriumState baseline;
  EquilibriumState shocked;
  WageMultipliers multipliers;
  int sign_informal = 0;  // sign of m - 1
  int sign_formal_low = 0;
  int sign_high = 0;
  bool mu_exceeds_eta = false;
  /// True when mu > eta yet the informal wage falls: the formula contradicts the
  /// verbal claim that informal wages rise under mu > eta.
  bool informal_claim_contradicted = false;

  /// CSV with header `scenario,w_i,w_l,w_h,m_i,m_l,m_h`; rows `baseline` and `shocked`.
  std::string to_csv() const;
};

ComparativeStaticsReport comparative_statics_report(const EconomyParams& params, const ImmigrationShock& shock,
                                                    double price_level = 1.0);

// ---------------------------------------------------------------------------
// Border-town model
// ---------------------------------------------------------------------------

struct BorderTownParams {
  double phi = 1.0;            // formal technology scale
  double psi = 1.0;            // informal technology scale
  double tau = 0.25;           // labor tax rate
  double nu = 0.5;             // native consumption preference
  double rho = 0.4;            // refugee consumption preference
  double delta_penalty = 0.5;  // refugee productivity penalty

  void validate() const;
};

struct BorderTownEquilibrium {
  double wage = 0.0;
  double native_labor = 0.0;
  double refugee_labor = 0.0;
  double effective_informal_labor = 0.0;  // H_n^i + delta H_r^i
  double effective_formal_labor = 0.0;    // H_n^f + delta H_r^f
  double output_informal = 0.0;
  double output_formal = 0.0;
  double native_consumption = 0.0;
  double refugee_consumption = 0.0;
  double transfer = 0.0;
  /// Y_i + Y_f - (c_n + c_r); reported, never enforced.
  double goods_market_residual = 0.0;
  bool with_refugees = false;
};

BorderTownEquilibrium solve_border_town(const BorderTownParams& params, bool with_refugees);

/// Effective labor demand minus effective household supply at wage w.
double border_town_labor_residual(const BorderTownParams& params, bool with_refugees, double wage);

/// Equilibrium wage located by bisection on the labor-clearing residual over
/// [1e-8, 1e8] with 1e-12 relative tolerance.
double border_town_wage_by_bisection(const BorderTownParams& params, bool with_refugees);

}  // namespace borderlab::economy

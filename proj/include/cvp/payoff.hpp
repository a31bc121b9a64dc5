#pragma once

#include <string_view>
#include <vector>

namespace cvp {

enum class OptionKind { call, put };

/// Contract terms shared by every pricer.
struct PricingTerms {
  double r = 0.0;      ///< risk-free rate
  double tau = 0.0;    ///< time to maturity
  double strike = 0.0;
  OptionKind kind = OptionKind::call;
};

void validate(const PricingTerms& terms);

enum class PayoffKind {
  call_on_p,      ///< max(p − K, 0)
  put_on_p,       ///< max(K − p, 0)
  forward_on_p,   ///< p − K
  call_on_value,  ///< max(p·V − K, 0), settled on the transaction value C = p·V
  claim_pv,       ///< p·V
  table,          ///< terminal values sampled on the solver grid
};

struct Payoff {
  PayoffKind kind = PayoffKind::call_on_p;
  double strike = 0.0;
  std::vector<double> table;

  static Payoff call(double k) { return {PayoffKind::call_on_p, k, {}}; }
  static Payoff put(double k) { return {PayoffKind::put_on_p, k, {}}; }
  static Payoff forward(double k) { return {PayoffKind::forward_on_p, k, {}}; }
  static Payoff call_on_value(double k) { return {PayoffKind::call_on_value, k, {}}; }
  static Payoff claim_pv() { return {PayoffKind::claim_pv, 0.0, {}}; }
  static Payoff tabulated(std::vector<double> values) {
    return {PayoffKind::table, 0.0, std::move(values)};
  }
  /// Vanilla payoff on p matching the option kind and strike of `terms`.
  static Payoff vanilla(const PricingTerms& terms);

  [[nodiscard]] bool on_price_only() const {
    return kind == PayoffKind::call_on_p || kind == PayoffKind::put_on_p ||
           kind == PayoffKind::forward_on_p;
  }
  [[nodiscard]] bool needs_volume() const {
    return kind == PayoffKind::call_on_value || kind == PayoffKind::claim_pv;
  }

  /// Terminal value at price p and volume v. Throws InvalidInput for tables.
  [[nodiscard]] double operator()(double p, double v = 1.0) const;
};

std::string_view to_string(PayoffKind kind);
PayoffKind payoff_kind_from_string(std::string_view name);

}  // namespace cvp

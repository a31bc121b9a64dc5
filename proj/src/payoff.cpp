#include "cvp/payoff.hpp"

#include "cvp/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace cvp {

void validate(const PricingTerms& terms) {
  if (!std::isfinite(terms.r)) throw InvalidInput("pricing terms: r must be finite");
  if (!(terms.tau >= 0.0) || !std::isfinite(terms.tau))
    throw InvalidInput("pricing terms: tau must be finite and >= 0");
  if (!(terms.strike >= 0.0) || !std::isfinite(terms.strike))
    throw InvalidInput("pricing terms: strike must be finite and >= 0");
}

Payoff Payoff::vanilla(const PricingTerms& terms) {
  return terms.kind == OptionKind::call ? call(terms.strike) : put(terms.strike);
}

double Payoff::operator()(double p, double v) const {
  switch (kind) {
    case PayoffKind::call_on_p: return std::max(p - strike, 0.0);
    case PayoffKind::put_on_p: return std::max(strike - p, 0.0);
    case PayoffKind::forward_on_p: return p - strike;
    case PayoffKind::call_on_value: return std::max(p * v - strike, 0.0);
    case PayoffKind::claim_pv: return p * v;
    case PayoffKind::table: break;
  }
  throw InvalidInput("tabulated payoff cannot be evaluated off its grid");
}

std::string_view to_string(PayoffKind kind) {
  switch (kind) {
    case PayoffKind::call_on_p: return "call";
    case PayoffKind::put_on_p: return "put";
    case PayoffKind::forward_on_p: return "forward";
    case PayoffKind::call_on_value: return "call-on-C";
    case PayoffKind::claim_pv: return "claim-pV";
    case PayoffKind::table: return "table";
  }
  return "?";
}

PayoffKind payoff_kind_from_string(std::string_view name) {
  if (name == "call" || name == "call-on-p") return PayoffKind::call_on_p;
  if (name == "put" || name == "put-on-p") return PayoffKind::put_on_p;
  if (name == "forward" || name == "forward-on-p") return PayoffKind::forward_on_p;
  if (name == "call-on-C" || name == "call-on-value") return PayoffKind::call_on_value;
  if (name == "claim-pV" || name == "value-claim") return PayoffKind::claim_pv;
  throw InvalidInput("unknown payoff kind '" + std::string(name) + "'");
}

}  // namespace cvp

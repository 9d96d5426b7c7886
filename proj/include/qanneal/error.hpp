#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qanneal {

/// Failure categories surfaced by the library. Every thrown qanneal::Error
/// carries one of these so callers (and the CLI) can report structured errors.
enum class Errc {
  invalid_size,
  infeasible_instance,
  invalid_parameter,
  domain_error,
  contract_violation,
  dimension_mismatch,
  memory_guard,
  integration_failure,
  ambiguous_preparation,
  invalid_state,
  numerical_corruption,
  optimization_failure,
  invalid_probability,
  config_error,
  io_error,
};

constexpr std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_size: return "invalid-size";
    case Errc::infeasible_instance: return "infeasible-instance";
    case Errc::invalid_parameter: return "invalid-parameter";
    case Errc::domain_error: return "domain-error";
    case Errc::contract_violation: return "contract-violation";
    case Errc::dimension_mismatch: return "dimension-mismatch";
    case Errc::memory_guard: return "memory-guard";
    case Errc::integration_failure: return "integration-failure";
    case Errc::ambiguous_preparation: return "ambiguous-preparation";
    case Errc::invalid_state: return "invalid-state";
    case Errc::numerical_corruption: return "numerical-corruption";
    case Errc::optimization_failure: return "optimization-failure";
    case Errc::invalid_probability: return "invalid-probability";
    case Errc::config_error: return "config-error";
    case Errc::io_error: return "io-error";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  [[nodiscard]] Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace qanneal

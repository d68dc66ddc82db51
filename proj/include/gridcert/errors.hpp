#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace gridcert {

/// An operating point lies outside a device's capability region
/// (e.g. the internal-phase denominator is not positive).
class DomainError : public std::domain_error {
public:
    explicit DomainError(const std::string& what, std::optional<std::size_t> bus = std::nullopt)
        : std::domain_error(what), bus_(bus) {}

    [[nodiscard]] std::optional<std::size_t> bus() const noexcept { return bus_; }
    void set_bus(std::size_t bus) noexcept { bus_ = bus; }

private:
    std::optional<std::size_t> bus_;
};

/// Newton iteration failed to converge or hit a singular Jacobian.
class SolverError : public std::runtime_error {
public:
    SolverError(const std::string& what, double residual, int iterations)
        : std::runtime_error(what), residual_(residual), iterations_(iterations) {}

    [[nodiscard]] double residual() const noexcept { return residual_; }
    [[nodiscard]] int iterations() const noexcept { return iterations_; }

private:
    double residual_;
    int iterations_;
};

/// Malformed or inconsistent configuration document.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace gridcert

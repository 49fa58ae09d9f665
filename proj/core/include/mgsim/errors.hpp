#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace mgsim {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A documented precondition was not met by the caller.
class ContractViolation : public Error {
public:
    using Error::Error;
};

/// Non-finite state derivative encountered while integrating.
class IntegrationDiverged : public Error {
public:
    IntegrationDiverged(const std::string& what, double time)
        : Error(what), time_(time) {}
    [[nodiscard]] double time() const noexcept { return time_; }

private:
    double time_;
};

/// A matrix equation has no (unique) solution, e.g. Lyapunov with non-Hurwitz A.
class NoSolution : public Error {
public:
    using Error::Error;
};

/// Malformed or inconsistent configuration. Line is 0 when not file-based.
class ConfigError : public Error {
public:
    ConfigError(const std::string& what, std::string key = {}, int line = 0)
        : Error(what), key_(std::move(key)), line_(line) {}
    [[nodiscard]] const std::string& key() const noexcept { return key_; }
    [[nodiscard]] int line() const noexcept { return line_; }

private:
    std::string key_;
    int line_;
};

/// Transition certificate cannot be issued because A(eps) is not Hurwitz.
class CertificateUnavailable : public Error {
public:
    CertificateUnavailable(const std::string& what, double epsilon)
        : Error(what), epsilon_(epsilon) {}
    [[nodiscard]] double epsilon() const noexcept { return epsilon_; }

private:
    double epsilon_;
};

/// Metric extraction could not find a steady value.
class SettlingFailure : public Error {
public:
    using Error::Error;
};

/// Scenario produced an unbounded state.
class ScenarioFailed : public Error {
public:
    ScenarioFailed(const std::string& what, std::string signal)
        : Error(what), signal_(std::move(signal)) {}
    [[nodiscard]] const std::string& signal() const noexcept { return signal_; }

private:
    std::string signal_;
};

}  // namespace mgsim

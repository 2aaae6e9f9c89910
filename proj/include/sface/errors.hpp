#pragma once

#include <stdexcept>
#include <string>

namespace sface {

// Error hierarchy shared by all modules. Everything derives from
// std::runtime_error so callers can catch broadly or by exact cause.

struct DegenerateVector : std::runtime_error {
    explicit DegenerateVector(const std::string& what) : std::runtime_error(what) {}
};

struct DimensionMismatch : std::runtime_error {
    explicit DimensionMismatch(const std::string& what) : std::runtime_error(what) {}
};

struct InvalidSpec : std::runtime_error {
    explicit InvalidSpec(const std::string& what) : std::runtime_error(what) {}
};

struct MarginDomain : std::runtime_error {
    explicit MarginDomain(const std::string& what) : std::runtime_error(what) {}
};

struct SingularAngle : std::runtime_error {
    explicit SingularAngle(const std::string& what) : std::runtime_error(what) {}
};

struct NonFiniteLoss : std::runtime_error {
    explicit NonFiniteLoss(const std::string& what) : std::runtime_error(what) {}
};

struct DivergedLoss : std::runtime_error {
    explicit DivergedLoss(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace sface

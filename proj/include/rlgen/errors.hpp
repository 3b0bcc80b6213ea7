#pragma once

#include <stdexcept>
#include <string>

namespace rlgen {

/// Base class for all workbench errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct InvalidMdp : Error {
    explicit InvalidMdp(const std::string& msg) : Error("invalid mdp: " + msg) {}
};
struct NonConvergent : Error {
    explicit NonConvergent(const std::string& msg) : Error("non-convergent: " + msg) {}
};
struct DimensionMismatch : Error {
    explicit DimensionMismatch(const std::string& msg) : Error("dimension mismatch: " + msg) {}
};
struct CapExceeded : Error {
    explicit CapExceeded(const std::string& msg) : Error("cap exceeded: " + msg) {}
};
struct NotEnoughParams : Error {
    explicit NotEnoughParams(const std::string& msg) : Error("not enough params: " + msg) {}
};
struct IncompatiblePolicy : Error {
    explicit IncompatiblePolicy(const std::string& msg) : Error("incompatible policy: " + msg) {}
};
struct EmptyEval : Error {
    explicit EmptyEval(const std::string& msg) : Error("empty eval sample: " + msg) {}
};
struct EmptySample : Error {
    explicit EmptySample(const std::string& msg) : Error("empty sample: " + msg) {}
};
struct UnboundedHorizonNoiseStream : Error {
    explicit UnboundedHorizonNoiseStream(const std::string& msg)
        : Error("noise-stream unwrap needs a finite horizon: " + msg) {}
};
struct SpacesNotShared : Error {
    explicit SpacesNotShared(const std::string& msg) : Error("spaces not shared: " + msg) {}
};
struct MTooLarge : Error {
    explicit MTooLarge(const std::string& msg) : Error("word size too large: " + msg) {}
};
struct DegenerateGrid : Error {
    explicit DegenerateGrid(const std::string& msg) : Error("degenerate grid: " + msg) {}
};
struct NotABijection : Error {
    explicit NotABijection(const std::string& msg) : Error("not a bijection: " + msg) {}
};
struct DegenerateGradient : Error {
    explicit DegenerateGradient(const std::string& msg) : Error("degenerate gradient: " + msg) {}
};
struct IncompatibleAgent : Error {
    explicit IncompatibleAgent(const std::string& msg) : Error("incompatible agent: " + msg) {}
};
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error("config error: " + msg) {}
};

}  // namespace rlgen

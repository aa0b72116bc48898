#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace srsdeq {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class SingularError : public Error {
public:
    using Error::Error;
};

class ArgumentError : public Error {
public:
    using Error::Error;
};

/// Non-finite value produced while iterating. `iteration` is the solver
/// iteration at which it appeared; `lane` is set by batched solves.
class NumericalError : public Error {
public:
    NumericalError(const std::string& what, std::size_t iteration, long lane = -1)
        : Error(what), iteration_(iteration), lane_(lane) {}

    std::size_t iteration() const noexcept { return iteration_; }
    long lane() const noexcept { return lane_; }

private:
    std::size_t iteration_;
    long lane_;
};

class TrainingDiverged : public Error {
public:
    TrainingDiverged(const std::string& what, std::size_t step) : Error(what), step_(step) {}
    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

class CertificationFailed : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class FormatError : public Error {
public:
    using Error::Error;
};

class AlignmentError : public Error {
public:
    using Error::Error;
};

}  // namespace srsdeq

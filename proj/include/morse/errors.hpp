#pragma once

#include <stdexcept>
#include <string>

namespace morse {

/// Base of every error raised by the library. Each subclass maps onto one
/// failure category of the CLI exit-code contract.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class RangeError : public Error {
public:
    using Error::Error;
};

// t_prev > t in a sampler step.
class OrderingError : public RangeError {
public:
    using RangeError::RangeError;
};

class SingularityError : public Error {
public:
    using Error::Error;
};

class NumericError : public Error {
public:
    using Error::Error;
};

class DomainError : public Error {
public:
    using Error::Error;
};

class ContractError : public Error {
public:
    using Error::Error;
};

class ScheduleError : public ContractError {
public:
    using ContractError::ContractError;
};

class DivergenceError : public Error {
public:
    using Error::Error;
};

class IntegrityError : public Error {
public:
    using Error::Error;
};

class EmptyAverageError : public Error {
public:
    using Error::Error;
};

}  // namespace morse

/**
 * @file errors.hpp
 * @brief Exception hierarchy shared by all meshderiv modules.
 */
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace meshderiv {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// A node has no outgoing edges, so no local fit exists there.
class IsolatedNodeError : public Error {
public:
    IsolatedNodeError(std::size_t node);
    std::size_t node;
};

/// Too few neighbors for the requested local fit.
class UnderdeterminedError : public Error {
public:
    UnderdeterminedError(const std::string& op, std::size_t node, std::size_t have, std::size_t need);
    std::size_t node;
};

/// Operator applied to a neighborhood whose geometry changed since assembly.
class StaleOperatorError : public Error {
public:
    using Error::Error;
};

class NumericOverflowError : public Error {
public:
    NumericOverflowError(const std::string& where, int layer);
    int layer;
};

/// Non-finite state after an integration step.
class DivergenceError : public Error {
public:
    DivergenceError(std::size_t step);
    std::size_t step;
};

class PositivityError : public Error {
public:
    PositivityError(const std::string& what, std::size_t cell);
    std::size_t cell;
};

class OracleError : public Error {
public:
    using Error::Error;
};

class SplitConstructionError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace meshderiv

#pragma once

#include <stdexcept>
#include <string>

namespace ewel {

//! Invalid or inconsistent configuration (bad parameters, unsupported shapes).
class ConfigError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

//! Argument outside the documented domain of an operation.
class ArgumentError : public std::invalid_argument
{
public:
  using std::invalid_argument::invalid_argument;
};

//! Non-finite values or failed numerical invariants during a computation.
class NumericalFault : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

//! A request that would exceed a memory or size budget.
class BudgetError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

} // namespace ewel

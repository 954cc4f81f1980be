// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace morwave
{

// Base of every exception thrown by the library.
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

// Precondition violations: bad shapes, ranks out of range, invalid parameters.
class InvalidArgument : public Error
{
public:
  using Error::Error;
};

// Factorization failures, singular systems, non-finite states.
class NumericalError : public Error
{
public:
  using Error::Error;
};

// Malformed files and configuration documents.
class FormatError : public Error
{
public:
  using Error::Error;
};

namespace detail
{

inline void Require(bool condition, const std::string &message)
{
  if (!condition)
  {
    throw InvalidArgument(message);
  }
}

}  // namespace detail

}  // namespace morwave

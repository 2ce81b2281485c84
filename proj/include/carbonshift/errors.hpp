#pragma once

#include <stdexcept>
#include <string>

namespace carbonshift {

/// Base class of every error raised by the library.
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file. The message carries the file and record context.
class ParseError : public Error
{
public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : Error(file + ":" + std::to_string(line) + ": " + what), file_(file), line_(line)
  {}
  explicit ParseError(const std::string& what) : Error(what) {}

  const std::string& file() const noexcept { return file_; }
  std::size_t line() const noexcept { return line_; }

private:
  std::string file_;
  std::size_t line_ = 0;
};

/// Structurally well-formed input that violates a model invariant.
class ValidationError : public Error
{
public:
  using Error::Error;
};

class IndexError : public Error
{
public:
  using Error::Error;
};

/// Argument outside the domain an operation accepts.
class DomainError : public Error
{
public:
  using Error::Error;
};

class DimensionError : public Error
{
public:
  using Error::Error;
};

/// Solver or factorization failure.
class NumericalError : public Error
{
public:
  using Error::Error;
};

}  // namespace carbonshift

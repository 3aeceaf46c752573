#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace serprank {

// Base type for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid argument on an API surface.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// Bad or inconsistent configuration.  CLI exit code 1.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Anything wrong with input data or stored artifacts.  CLI exit code 2.
class DataError : public Error {
 public:
  using Error::Error;
};

class ParseError : public DataError {
 public:
  ParseError(std::size_t line, const std::string& what)
      : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class ValidationError : public DataError {
 public:
  using DataError::DataError;
};

class EmptyDatasetError : public DataError {
 public:
  using DataError::DataError;
};

class CheckpointError : public DataError {
 public:
  using DataError::DataError;
};

// Tensor shape disagreements.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// API misuse that violates a documented contract (stale tape, duplicate
// ranklist index, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

// Training produced non-finite values.  CLI exit code 3.
class DivergenceError : public Error {
 public:
  DivergenceError(std::int64_t step, const std::string& what)
      : Error("step " + std::to_string(step) + ": " + what), step_(step) {}
  std::int64_t step() const { return step_; }

 private:
  std::int64_t step_;
};

class SamplingStallError : public Error {
 public:
  using Error::Error;
};

// splitmix64 finalizer; used to derive independent seed streams.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

// Deterministic RNG.  Wraps mt19937_64 but implements its own distributions,
// so draws are identical across platforms and standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform01();  // [0, 1)
  double uniform(double lo, double hi);
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);  // inclusive
  double normal();  // N(0, 1), Box-Muller

  std::string state() const;
  void restore(const std::string& snapshot);

  // Child stream seeded from this one; advances this stream by one draw.
  Rng spawn();

 private:
  std::mt19937_64 engine_;
};

// Shortest decimal form that parses back to the exact same double.
std::string format_double(double value);
double parse_double(std::string_view text);  // throws ArgumentError

}  // namespace serprank

// Copyright 2026 The vidmdl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Exception hierarchy shared by every vidmdl module.

#pragma once

#include <stdexcept>
#include <string>

namespace vidmdl {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes. The message names the op and the offending axes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A caller broke a documented precondition (non-scalar loss, bad label, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration: unknown keys, bad locations, empty datasets.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A batch was routed to a domain the network does not know.
class RoutingError : public Error {
 public:
  using Error::Error;
};

// Non-finite values detected during forward/backward or in a training loss.
class NumericError : public Error {
 public:
  using Error::Error;
};

class ParseError : public ConfigError {
 public:
  ParseError(const std::string& source, int line, const std::string& what)
      : ConfigError(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

  int line() const noexcept { return line_; }

 private:
  int line_;
};

}  // namespace vidmdl

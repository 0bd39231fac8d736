#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace rkgcn {

using EntityId = std::int32_t;
using RelationId = std::int32_t;
using UserId = std::int32_t;
using ItemId = std::int32_t;

/// All sampling goes through an explicitly passed generator of this type.
using Rng = std::mt19937_64;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file. Carries the 1-based line number when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& path, std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Input is well-formed but unusable (empty, no positives, missing mapping...).
class DataError : public Error {
 public:
  using Error::Error;
};

/// A referenced file could not be opened.
class MissingFileError : public Error {
 public:
  explicit MissingFileError(const std::string& path);
};

/// Non-finite loss or gradient during training.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// splitmix64 finalizer; used to derive independent stream seeds.
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

/// 64-bit FNV-1a. Stable across platforms, used for manifest checksums.
std::uint64_t fnv1a(std::string_view data, std::uint64_t hash = 0xcbf29ce484222325ULL);

std::string hex64(std::uint64_t value);

}  // namespace rkgcn

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace nwqm {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Malformed input files: dumps, embedding stores, checkpoints, corpus records.
class FormatError : public Error {
 public:
  using Error::Error;
};

class DumpParseError : public FormatError {
 public:
  DumpParseError(const std::string& what, std::uint64_t byte_offset)
      : FormatError(what + " at byte " + std::to_string(byte_offset)), offset_(byte_offset) {}
  std::uint64_t byte_offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A stage was asked to run before the artifact it consumes exists.
class MissingArtifactError : public Error {
 public:
  explicit MissingArtifactError(const std::string& path)
      : Error("missing artifact: " + path), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

}  // namespace nwqm

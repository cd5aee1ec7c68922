#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace copsref {

enum class ErrorKind {
  MalformedDocument,
  SchemaViolation,
  DanglingEdge,
  EmptyCorpus,
  EmptyInput,
  SlotMismatch,
  KeyMismatch,
  NoCandidates,
  ZeroNorm,
  DimensionMismatch,
  NoPeers,
  Config,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MalformedDocument: return "MalformedDocument";
    case ErrorKind::SchemaViolation: return "SchemaViolation";
    case ErrorKind::DanglingEdge: return "DanglingEdge";
    case ErrorKind::EmptyCorpus: return "EmptyCorpus";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::SlotMismatch: return "SlotMismatch";
    case ErrorKind::KeyMismatch: return "KeyMismatch";
    case ErrorKind::NoCandidates: return "NoCandidates";
    case ErrorKind::ZeroNorm: return "ZeroNorm";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::NoPeers: return "NoPeers";
    case ErrorKind::Config: return "ConfigError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

template <ErrorKind K>
class KindError : public Error {
 public:
  explicit KindError(const std::string& what) : Error(K, what) {}
};

using MalformedDocument = KindError<ErrorKind::MalformedDocument>;
using SchemaViolation = KindError<ErrorKind::SchemaViolation>;
using DanglingEdge = KindError<ErrorKind::DanglingEdge>;
using EmptyCorpus = KindError<ErrorKind::EmptyCorpus>;
using EmptyInput = KindError<ErrorKind::EmptyInput>;
using SlotMismatch = KindError<ErrorKind::SlotMismatch>;
using KeyMismatch = KindError<ErrorKind::KeyMismatch>;
using NoCandidates = KindError<ErrorKind::NoCandidates>;
using ZeroNorm = KindError<ErrorKind::ZeroNorm>;
using DimensionMismatch = KindError<ErrorKind::DimensionMismatch>;
using NoPeers = KindError<ErrorKind::NoPeers>;
using ConfigError = KindError<ErrorKind::Config>;

}  // namespace copsref

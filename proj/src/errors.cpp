#include "gsgw/errors.hpp"

namespace gsgw {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput: return "InvalidInput";
    case ErrorKind::ShapeError: return "ShapeError";
    case ErrorKind::SizeError: return "SizeError";
    case ErrorKind::NumericError: return "NumericError";
    case ErrorKind::DegenerateInput: return "DegenerateInput";
    case ErrorKind::UnsupportedMarginals: return "UnsupportedMarginals";
    case ErrorKind::OptimizationFailure: return "OptimizationFailure";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::ConnectivityError: return "ConnectivityError";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::InternalError: return "InternalError";
  }
  return "UnknownError";
}

}  // namespace gsgw

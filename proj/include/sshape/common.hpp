#pragma once

#include <stdexcept>
#include <string>

namespace sshape {

inline constexpr const char* kVersion = "0.1.0";

// Error classes map to CLI exit codes: input/validation problems exit 2,
// numerical or runtime failures exit 1.
enum class ErrorClass { Parse, Config, Io, Numeric, Usage };

inline const char* to_string(ErrorClass c) {
    switch (c) {
        case ErrorClass::Parse: return "PARSE";
        case ErrorClass::Config: return "CONFIG";
        case ErrorClass::Io: return "IO";
        case ErrorClass::Numeric: return "NUMERIC";
        case ErrorClass::Usage: return "USAGE";
    }
    return "UNKNOWN";
}

class Error : public std::runtime_error {
  public:
    Error(ErrorClass cls, const std::string& msg)
        : std::runtime_error(msg), cls_(cls) {}
    ErrorClass error_class() const { return cls_; }
    int exit_code() const {
        switch (cls_) {
            case ErrorClass::Parse:
            case ErrorClass::Config:
            case ErrorClass::Usage: return 2;
            default: return 1;
        }
    }

  private:
    ErrorClass cls_;
};

[[noreturn]] inline void fail(ErrorClass cls, const std::string& msg) {
    throw Error(cls, msg);
}

inline void require(bool cond, ErrorClass cls, const std::string& msg) {
    if (!cond) fail(cls, msg);
}

}  // namespace sshape

#pragma once

#include <stdexcept>
#include <string>

namespace exbehrt {

// Three error classes, mirrored by CLI exit codes: usage (1), data (2),
// internal (3). Everything thrown inside the library is one of these.
enum class ErrorKind { Usage, Data, Internal };

class ExbError : public std::runtime_error {
public:
    ExbError(ErrorKind kind, std::string msg)
        : std::runtime_error(std::move(msg)), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

inline ExbError usage_error(std::string msg) { return ExbError(ErrorKind::Usage, std::move(msg)); }
inline ExbError data_error(std::string msg) { return ExbError(ErrorKind::Data, std::move(msg)); }
inline ExbError internal_error(std::string msg) { return ExbError(ErrorKind::Internal, std::move(msg)); }

} // namespace exbehrt

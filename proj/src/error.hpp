#ifndef DAC_ERROR_HPP
#define DAC_ERROR_HPP

#include <stdexcept>
#include <string>

namespace dac {

// Error taxonomy shared by the whole library. The C API maps these kinds
// onto its status codes, the CLI maps them onto exit codes.
enum class ErrorKind {
    Shape,       // dimension mismatch between operands
    Config,      // invalid hyperparameter or option value
    Data,        // bad dataset content (labels, splits, empty inputs)
    Usage,       // API misuse (stale cache, out-of-range index)
    Format,      // malformed file on disk
    Degenerate,  // zero-norm vector where a direction is required
    Io,          // filesystem failure
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg)
        : std::runtime_error(msg), kind_(kind) {}

    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void raise(ErrorKind kind, const std::string& msg) {
    throw Error(kind, msg);
}

inline const char* error_kind_name(ErrorKind k) {
    switch (k) {
        case ErrorKind::Shape: return "shape";
        case ErrorKind::Config: return "config";
        case ErrorKind::Data: return "data";
        case ErrorKind::Usage: return "usage";
        case ErrorKind::Format: return "format";
        case ErrorKind::Degenerate: return "degenerate";
        case ErrorKind::Io: return "io";
    }
    return "unknown";
}

}  // namespace dac

#endif  // DAC_ERROR_HPP

#pragma once

#include <stdexcept>
#include <string>

namespace burstlab {

/// Invalid argument or violated precondition.
class param_error : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Non-finite values where finite ones are required (diverged training, bad input).
class numeric_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// File / container failures, with a code so callers can tell corruption modes apart.
class io_error : public std::runtime_error {
public:
    enum class code {
        open_failed,
        bad_magic,
        bad_version,
        truncated,
        write_failed,
        mismatch,
    };

    io_error(code c, const std::string& what) : std::runtime_error(what), code_(c) {}
    code error_code() const { return code_; }

private:
    code code_;
};

} // namespace burstlab

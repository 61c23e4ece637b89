#pragma once

#include <stdexcept>
#include <string>

namespace penrose {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : Error {
    using Error::Error;
};

}  // namespace penrose

#pragma once

#include <stdexcept>
#include <string>

namespace bsio {

// Base class for everything thrown by this library.
struct error : std::runtime_error {
    explicit error(const std::string& what) : std::runtime_error(what) {}
};

// Bad inputs: malformed configs, incompatible lattices, violated preconditions.
struct validation_error : error {
    explicit validation_error(const std::string& what) : error(what) {}
};

// A computation would exceed its declared budget (kernel evaluations, cube
// counts, separation growth).  Callers map this to a distinct exit code.
struct resource_error : error {
    explicit resource_error(const std::string& what) : error(what) {}
};

} // namespace bsio

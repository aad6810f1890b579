#pragma once

#include <stdexcept>
#include <string>

namespace memmgr {

// Base for every error the library raises on purpose.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace memmgr

#pragma once

#include <json.hpp>

namespace memmgr {

// Insertion-ordered so emitted documents follow the documented key order.
using Json = nlohmann::ordered_json;

}  // namespace memmgr

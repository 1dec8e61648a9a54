#pragma once

#include <string>

namespace ame {

/// SHA-256 hex digest of a byte string. Used for output manifests.
std::string sha256_hex(const std::string& bytes);

}  // namespace ame

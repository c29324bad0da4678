#pragma once

#include <string>
#include <string_view>

namespace monosfm {

// Lower-case hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

// Project version string compiled into the library.
const char* version_string();

}  // namespace monosfm

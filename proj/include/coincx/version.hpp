#pragma once

namespace coincx {

inline constexpr const char* kVersion = "0.1.0";

} // namespace coincx

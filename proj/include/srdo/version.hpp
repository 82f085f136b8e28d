#pragma once

namespace srdo {

inline constexpr const char* version = "0.1.0";

}  // namespace srdo

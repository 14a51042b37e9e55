#pragma once

namespace qp {
inline constexpr const char* kToolName = "qp";
inline constexpr const char* kVersion = "1.0.0";
}  // namespace qp

#pragma once

namespace coldmap {

inline constexpr const char* kLibraryVersion = "0.1.0";

// Artifact format tags. Readers reject anything else.
inline constexpr const char* kMatrixFormatVersion = "coldmap-matrix-v1";
inline constexpr const char* kSimilarityFormatVersion = "coldmap-sim-v1";
inline constexpr const char* kFactorModelFormatVersion = "coldmap-model-v1";
inline constexpr const char* kGbtFormatVersion = "coldmap-gbt-v1";

}  // namespace coldmap

#pragma once

#include <filesystem>
#include <vector>

#include "vld/features/record.hpp"

namespace vld::features {

inline constexpr const char* kManifestFile = "manifest.jsonl";
inline constexpr const char* kFeaturesFile = "features.bin";

// manifest.jsonl holds one JSON object per record; every vector lives in
// features.bin (little-endian f32) and is referenced as {offset, len} in
// float units. Creates `dir` if needed and overwrites both files.
void write_manifest(const std::vector<ImageRecord>& records, const std::filesystem::path& dir);

// Records in manifest line order. Malformed lines raise IngestionError with
// the line number, out-of-range blob references CorruptionError, and
// dimension or finiteness violations SchemaError.
std::vector<ImageRecord> load_manifest(const std::filesystem::path& dir);

}  // namespace vld::features

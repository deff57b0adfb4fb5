#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fpcm/dataset.hpp"

namespace fpcm::io {

// On-disk dataset bundle: a directory holding
//   meta.json  - dims, seed, family tags, standardization record, adjacency
//                as nested 0/1 arrays, topological order as an index array,
//                realized mechanism parameters
//   x.f64      - observations, row-major little-endian float64, n x d
//   n.f64      - exogenous noise in the same layout (when available)
void saveBundle(const std::filesystem::path& dir, const Dataset& dataset);
Dataset loadBundle(const std::filesystem::path& dir);

struct Manifest {
  nlohmann::json header;              // preset, seed, dims, counts
  std::vector<std::string> bundles;   // directory names relative to the manifest
};

void saveManifest(const std::filesystem::path& file, const Manifest& manifest);
Manifest loadManifest(const std::filesystem::path& file);

// Bundles listed by a manifest, resolved relative to its location.
std::vector<std::filesystem::path> manifestBundleDirs(const std::filesystem::path& file);

}  // namespace fpcm::io

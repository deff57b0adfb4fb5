#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

namespace fpcm::io {

// Container layout: magic bytes, u64 little-endian JSON header length, the
// JSON header (UTF-8), then raw little-endian float64 buffers concatenated in
// the order declared under header["buffers"] = [{name, dims}, ...].
// Round-trips are bit-exact: buffers are written untouched.

struct CheckpointBuffer {
  std::string name;
  std::vector<int> dims;
  Eigen::ArrayXd data;  // flat row-major
};

struct Checkpoint {
  nlohmann::json header;  // without the "buffers" key
  std::vector<CheckpointBuffer> buffers;

  const CheckpointBuffer& buffer(const std::string& name) const;
};

void writeCheckpoint(const std::filesystem::path& file, const std::string& magic,
                     const nlohmann::json& header,
                     const std::vector<CheckpointBuffer>& buffers);

// Throws FormatError when the magic does not match or the file is truncated.
Checkpoint readCheckpoint(const std::filesystem::path& file, const std::string& magic);

}  // namespace fpcm::io

#include "fpcm/autodiff.hpp"

namespace fpcm::io {

// Snapshot parameter views into row-major buffers and back.
std::vector<CheckpointBuffer> buffersFromViews(const std::vector<ad::ParamView>& views);
void loadViewsFromBuffers(const std::vector<ad::ParamView>& views, const Checkpoint& ckpt);

}  // namespace fpcm::io

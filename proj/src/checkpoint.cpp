#include "fpcm/checkpoint.hpp"

#include <cstdint>
#include <fstream>

#include "fpcm/errors.hpp"

namespace fpcm::io {

namespace {

Eigen::Index dimsNumel(const std::vector<int>& dims) {
  Eigen::Index n = 1;
  for (int d : dims) n *= d;
  return n;
}

}  // namespace

const CheckpointBuffer& Checkpoint::buffer(const std::string& name) const {
  for (const CheckpointBuffer& b : buffers)
    if (b.name == name) return b;
  throw FormatError("checkpoint has no buffer named " + name);
}

void writeCheckpoint(const std::filesystem::path& file, const std::string& magic,
                     const nlohmann::json& header,
                     const std::vector<CheckpointBuffer>& buffers) {
  nlohmann::json h = header;
  nlohmann::json order = nlohmann::json::array();
  for (const CheckpointBuffer& b : buffers) {
    if (b.data.size() != dimsNumel(b.dims))
      throw ArgumentError("checkpoint buffer " + b.name + " size does not match dims");
    order.push_back({{"name", b.name}, {"dims", b.dims}});
  }
  h["buffers"] = order;
  const std::string headerBytes = h.dump();

  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot write " + file.string());
  out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
  std::uint64_t len = headerBytes.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(headerBytes.data(), static_cast<std::streamsize>(headerBytes.size()));
  for (const CheckpointBuffer& b : buffers)
    out.write(reinterpret_cast<const char*>(b.data.data()),
              static_cast<std::streamsize>(sizeof(double) * b.data.size()));
  if (!out) throw IoError("short write to " + file.string());
}

Checkpoint readCheckpoint(const std::filesystem::path& file, const std::string& magic) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot read " + file.string());

  std::string got(magic.size(), '\0');
  in.read(got.data(), static_cast<std::streamsize>(magic.size()));
  if (!in || got != magic)
    throw FormatError(file.string() + ": bad magic (expected " + magic + ")");

  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in) throw FormatError(file.string() + " is truncated");
  std::string headerBytes(len, '\0');
  in.read(headerBytes.data(), static_cast<std::streamsize>(len));
  if (!in) throw FormatError(file.string() + " is truncated");

  nlohmann::json h;
  try {
    h = nlohmann::json::parse(headerBytes);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(file.string() + ": invalid header: " + e.what());
  }

  Checkpoint ckpt;
  for (const auto& entry : h.at("buffers")) {
    CheckpointBuffer b;
    b.name = entry.at("name").get<std::string>();
    b.dims = entry.at("dims").get<std::vector<int>>();
    b.data.resize(dimsNumel(b.dims));
    in.read(reinterpret_cast<char*>(b.data.data()),
            static_cast<std::streamsize>(sizeof(double) * b.data.size()));
    if (!in) throw FormatError(file.string() + " is truncated in buffer " + b.name);
    ckpt.buffers.push_back(std::move(b));
  }
  h.erase("buffers");
  ckpt.header = h;
  return ckpt;
}

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace

std::vector<CheckpointBuffer> buffersFromViews(const std::vector<ad::ParamView>& views) {
  std::vector<CheckpointBuffer> buffers;
  for (const ad::ParamView& v : views) {
    CheckpointBuffer b;
    b.name = v.name;
    b.dims = v.dims;
    b.data.resize(v.size);
    if (v.isMatrix) {
      Eigen::Map<const Eigen::MatrixXd> m(v.data, v.dims[0], v.dims[1]);
      Eigen::Map<RowMat>(b.data.data(), v.dims[0], v.dims[1]) = m;
    } else {
      b.data = Eigen::Map<const Eigen::ArrayXd>(v.data, v.size);
    }
    buffers.push_back(std::move(b));
  }
  return buffers;
}

void loadViewsFromBuffers(const std::vector<ad::ParamView>& views, const Checkpoint& ckpt) {
  for (const ad::ParamView& v : views) {
    const CheckpointBuffer& b = ckpt.buffer(v.name);
    if (b.dims != v.dims)
      throw FormatError("checkpoint buffer " + v.name + " has unexpected shape");
    if (v.isMatrix) {
      Eigen::Map<Eigen::MatrixXd>(v.data, v.dims[0], v.dims[1]) =
          Eigen::Map<const RowMat>(b.data.data(), v.dims[0], v.dims[1]);
    } else {
      Eigen::Map<Eigen::ArrayXd>(v.data, v.size) = b.data;
    }
  }
}

}  // namespace fpcm::io

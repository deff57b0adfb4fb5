#include "fpcm/bundle.hpp"

#include <fstream>

#include "fpcm/errors.hpp"

namespace fpcm::io {

namespace {

void writeF64(const std::filesystem::path& file, const Eigen::MatrixXd& m) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot write " + file.string());
  // Row-major on disk; Eigen stores column-major.
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      double v = m(r, c);
      out.write(reinterpret_cast<const char*>(&v), sizeof(double));
    }
  }
  if (!out) throw IoError("short write to " + file.string());
}

Eigen::MatrixXd readF64(const std::filesystem::path& file, int rows, int cols) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot read " + file.string());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      double v;
      in.read(reinterpret_cast<char*>(&v), sizeof(double));
      if (!in) throw FormatError(file.string() + " is truncated");
      m(r, c) = v;
    }
  }
  return m;
}

nlohmann::json adjacencyToJson(const scm::Dag& dag) {
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < dag.nodeCount(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < dag.nodeCount(); ++j) row.push_back(dag.edge(i, j) ? 1 : 0);
    rows.push_back(row);
  }
  return rows;
}

scm::Dag adjacencyFromJson(const nlohmann::json& rows) {
  const auto d = static_cast<int>(rows.size());
  scm::BoolMatrix adj = scm::BoolMatrix::Constant(d, d, false);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      adj(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].get<int>() != 0;
  return scm::Dag(std::move(adj));
}

}  // namespace

void saveBundle(const std::filesystem::path& dir, const Dataset& dataset) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string());

  nlohmann::json meta = dataset.meta;
  meta["n"] = dataset.rows();
  meta["d"] = dataset.cols();
  if (dataset.standardization) {
    nlohmann::json mean = nlohmann::json::array(), std_ = nlohmann::json::array();
    for (int j = 0; j < dataset.cols(); ++j) {
      mean.push_back(dataset.standardization->mean[j]);
      std_.push_back(dataset.standardization->std[j]);
    }
    meta["standardization"] = {{"mean", mean}, {"std", std_}};
  } else {
    meta["standardization"] = nullptr;
  }
  if (dataset.dag) meta["adjacency"] = adjacencyToJson(*dataset.dag);
  if (dataset.order) meta["order"] = dataset.order->map();
  meta["has_noise"] = dataset.noise.has_value();

  std::ofstream out(dir / "meta.json");
  if (!out) throw IoError("cannot write " + (dir / "meta.json").string());
  out << meta.dump(2) << "\n";
  out.close();

  writeF64(dir / "x.f64", dataset.x);
  if (dataset.noise) writeF64(dir / "n.f64", *dataset.noise);
}

Dataset loadBundle(const std::filesystem::path& dir) {
  std::ifstream in(dir / "meta.json");
  if (!in) throw IoError("cannot read " + (dir / "meta.json").string());
  nlohmann::json meta;
  try {
    in >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("invalid meta.json in " + dir.string() + ": " + e.what());
  }

  Dataset ds;
  const int n = meta.at("n").get<int>();
  const int d = meta.at("d").get<int>();
  ds.x = readF64(dir / "x.f64", n, d);
  if (meta.value("has_noise", false)) ds.noise = readF64(dir / "n.f64", n, d);
  if (meta.contains("adjacency")) ds.dag = adjacencyFromJson(meta.at("adjacency"));
  if (meta.contains("order")) ds.order = scm::Permutation(meta.at("order").get<std::vector<int>>());
  if (meta.contains("standardization") && !meta.at("standardization").is_null()) {
    const auto& s = meta.at("standardization");
    Eigen::VectorXd mean(d), std_(d);
    for (int j = 0; j < d; ++j) {
      mean[j] = s.at("mean")[static_cast<std::size_t>(j)].get<double>();
      std_[j] = s.at("std")[static_cast<std::size_t>(j)].get<double>();
    }
    ds.standardization = Standardization{mean, std_};
  }
  meta.erase("adjacency");
  meta.erase("order");
  meta.erase("standardization");
  meta.erase("has_noise");
  ds.meta = meta;
  ds.validate();
  return ds;
}

void saveManifest(const std::filesystem::path& file, const Manifest& manifest) {
  nlohmann::json j = manifest.header;
  j["bundles"] = manifest.bundles;
  std::ofstream out(file);
  if (!out) throw IoError("cannot write " + file.string());
  out << j.dump(2) << "\n";
}

Manifest loadManifest(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot read " + file.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("invalid manifest " + file.string() + ": " + e.what());
  }
  Manifest m;
  m.bundles = j.at("bundles").get<std::vector<std::string>>();
  j.erase("bundles");
  m.header = j;
  return m;
}

std::vector<std::filesystem::path> manifestBundleDirs(const std::filesystem::path& file) {
  Manifest m = loadManifest(file);
  std::vector<std::filesystem::path> dirs;
  dirs.reserve(m.bundles.size());
  for (const std::string& b : m.bundles) dirs.push_back(file.parent_path() / b);
  return dirs;
}

}  // namespace fpcm::io

#include "gmerge/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "gmerge/rng.hpp"

namespace gmerge {

namespace {

constexpr const char* kMagic = "gnncheckpoint";
constexpr int kVersion = 1;

void write_tensor(std::ofstream& out, const std::string& name,
                  const Tensor& t) {
  out << "T " << name << " " << t.rows() << " " << t.cols() << "\n";
  char buf[32];
  for (int i = 0; i < t.rows(); ++i) {
    for (int j = 0; j < t.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", t.at(i, j));
      out << (j ? " " : "") << buf;
    }
    out << "\n";
  }
}

[[noreturn]] void corrupt(const std::string& path, const std::string& what) {
  throw std::runtime_error("corrupt checkpoint " + path + ": " + what);
}

void read_tensor_into(std::ifstream& in, const std::string& path,
                      const std::string& expect_name, Tensor t) {
  std::string line;
  if (!std::getline(in, line)) corrupt(path, "truncated before " + expect_name);
  std::istringstream hs(line);
  std::string tag, name;
  int rows = 0, cols = 0;
  if (!(hs >> tag >> name >> rows >> cols) || tag != "T")
    corrupt(path, "bad tensor header '" + line + "'");
  if (name != expect_name)
    corrupt(path, "expected tensor " + expect_name + ", found " + name);
  if (rows != t.rows() || cols != t.cols())
    corrupt(path, "tensor " + name + " is " + std::to_string(rows) + "x" +
                      std::to_string(cols) + ", expected " + t.shape_str());
  for (int i = 0; i < rows; ++i) {
    if (!std::getline(in, line)) corrupt(path, "truncated in " + name);
    std::istringstream vs(line);
    for (int j = 0; j < cols; ++j)
      if (!(vs >> t.at(i, j))) corrupt(path, "short row in " + name);
  }
}

}  // namespace

void save_checkpoint(const std::string& path, GnnModel& model,
                     const CheckpointMeta& meta) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  const auto& d = model.descriptor();
  out << kMagic << " v" << kVersion << "\n";
  out << "kind " << to_string(d.kind) << "\n";
  out << "layers " << d.layers << "\n";
  out << "hidden_dim " << d.hidden_dim << "\n";
  out << "num_classes " << d.num_classes << "\n";
  out << "input_dim " << d.input_dim << "\n";
  out << "seed " << meta.seed << "\n";
  out << "epochs " << meta.epochs << "\n";
  out << "domain " << (meta.domain_tag.empty() ? "-" : meta.domain_tag) << "\n";
  auto params = model.all_params();
  auto buffers = model.bn_buffers();
  out << "tensors " << params.size() + buffers.size() << "\n";
  for (const auto& [name, t] : params) write_tensor(out, name, t);
  for (const auto& [name, t] : buffers) write_tensor(out, name, t);
  if (!out) throw std::runtime_error("write failed for checkpoint " + path);
}

GnnModel load_checkpoint(const std::string& path, CheckpointMeta* meta) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path);
  std::string line;
  if (!std::getline(in, line)) corrupt(path, "empty file");
  {
    std::istringstream hs(line);
    std::string magic, version;
    hs >> magic >> version;
    if (magic != kMagic) corrupt(path, "bad magic '" + magic + "'");
    if (version != "v1") corrupt(path, "unsupported version " + version);
  }
  ArchitectureDescriptor desc;
  CheckpointMeta m;
  std::size_t tensor_count = 0;
  auto read_kv = [&](const std::string& expect) -> std::string {
    if (!std::getline(in, line)) corrupt(path, "truncated header");
    std::istringstream kv(line);
    std::string key, value;
    if (!(kv >> key >> value) || key != expect)
      corrupt(path, "expected header key " + expect + ", got '" + line + "'");
    return value;
  };
  desc.kind = gnn_kind_from_string(read_kv("kind"));
  desc.layers = std::stoi(read_kv("layers"));
  desc.hidden_dim = std::stoi(read_kv("hidden_dim"));
  desc.num_classes = std::stoi(read_kv("num_classes"));
  desc.input_dim = std::stoi(read_kv("input_dim"));
  m.seed = std::stoull(read_kv("seed"));
  m.epochs = std::stoi(read_kv("epochs"));
  m.domain_tag = read_kv("domain");
  if (m.domain_tag == "-") m.domain_tag.clear();
  tensor_count = std::stoul(read_kv("tensors"));

  Rng rng(0);
  GnnModel model(desc, rng);
  auto params = model.all_params();
  auto buffers = model.bn_buffers();
  if (tensor_count != params.size() + buffers.size())
    corrupt(path, "tensor count " + std::to_string(tensor_count) +
                      " does not match descriptor");
  for (auto& [name, t] : params) read_tensor_into(in, path, name, t);
  for (auto& [name, t] : buffers) read_tensor_into(in, path, name, t);
  if (meta) *meta = m;
  return model;
}

}  // namespace gmerge

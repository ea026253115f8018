#include "gmerge/dataset_io.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace gmerge {

namespace {

std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

[[noreturn]] void corrupt(const std::string& path, const std::string& what) {
  throw std::runtime_error("dataset file " + path + ": " + what);
}

}  // namespace

void write_dataset(const std::string& path, const GraphDataset& ds) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "graphs=" << ds.graphs.size() << " classes=" << ds.num_classes
      << " dim=" << ds.feature_dim << "\n";
  for (const Graph& g : ds.graphs) {
    out << "g " << g.num_nodes << " " << g.label << "\n";
    for (int u = 0; u < g.num_nodes; ++u) {
      for (int k = 0; k < g.feature_dim; ++k) {
        if (k) out << " ";
        out << fmt17(g.feature(u, k));
      }
      out << "\n";
    }
    for (int u = 0; u < g.num_nodes; ++u)
      for (int v = u + 1; v < g.num_nodes; ++v)
        if (g.has_edge(u, v)) out << "e " << u << " " << v << "\n";
  }
  if (!out) throw std::runtime_error("write failed for " + path);
}

GraphDataset read_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::string header;
  if (!std::getline(in, header)) corrupt(path, "missing header");
  std::size_t n_graphs = 0;
  GraphDataset ds;
  {
    std::istringstream hs(header);
    std::string tok;
    bool have_n = false, have_c = false, have_d = false;
    while (hs >> tok) {
      auto eq = tok.find('=');
      if (eq == std::string::npos) corrupt(path, "bad header token " + tok);
      std::string key = tok.substr(0, eq);
      long value = std::stol(tok.substr(eq + 1));
      if (key == "graphs") {
        n_graphs = static_cast<std::size_t>(value);
        have_n = true;
      } else if (key == "classes") {
        ds.num_classes = static_cast<int>(value);
        have_c = true;
      } else if (key == "dim") {
        ds.feature_dim = static_cast<int>(value);
        have_d = true;
      } else {
        corrupt(path, "unknown header key " + key);
      }
    }
    if (!have_n || !have_c || !have_d) corrupt(path, "incomplete header");
  }
  ds.name = fs::path(path).stem().string();
  ds.graphs.reserve(n_graphs);
  std::string line;
  for (std::size_t gi = 0; gi < n_graphs; ++gi) {
    if (!std::getline(in, line)) corrupt(path, "truncated at graph header");
    std::istringstream gs(line);
    std::string tag;
    int n = 0, label = 0;
    if (!(gs >> tag >> n >> label) || tag != "g")
      corrupt(path, "expected graph header, got '" + line + "'");
    Graph g(n, ds.feature_dim);
    g.label = label;
    for (int u = 0; u < n; ++u) {
      if (!std::getline(in, line)) corrupt(path, "truncated in features");
      std::istringstream fsrm(line);
      for (int k = 0; k < ds.feature_dim; ++k)
        if (!(fsrm >> g.feature(u, k))) corrupt(path, "short feature row");
    }
    // edge lines last until next 'g' or EOF; peek-driven
    while (in.peek() == 'e') {
      if (!std::getline(in, line)) break;
      std::istringstream es(line);
      std::string etag;
      int u = 0, v = 0;
      if (!(es >> etag >> u >> v)) corrupt(path, "bad edge line '" + line + "'");
      if (u < 0 || v <= u || v >= n) corrupt(path, "edge out of range");
      g.add_edge(u, v);
    }
    ds.graphs.push_back(std::move(g));
  }
  ds.validate();
  return ds;
}

void write_tu_dataset(const std::string& directory, const std::string& name,
                      const GraphDataset& ds) {
  fs::create_directories(directory);
  auto open = [&](const std::string& suffix) {
    std::ofstream f(fs::path(directory) / (name + suffix));
    if (!f) throw std::runtime_error("cannot write TU file " + suffix);
    return f;
  };
  std::ofstream fa = open("_A.txt");
  std::ofstream fi = open("_graph_indicator.txt");
  std::ofstream fl = open("_graph_labels.txt");
  std::ofstream fn = open("_node_labels.txt");
  int base = 1;  // TU node ids are global and 1-indexed
  int gid = 1;
  for (const Graph& g : ds.graphs) {
    for (int u = 0; u < g.num_nodes; ++u) {
      fi << gid << "\n";
      int best = 0;
      for (int k = 1; k < g.feature_dim; ++k)
        if (g.feature(u, k) > g.feature(u, best)) best = k;
      fn << best << "\n";
      for (int v = 0; v < g.num_nodes; ++v)
        if (g.has_edge(u, v)) fa << (base + u) << ", " << (base + v) << "\n";
    }
    fl << g.label << "\n";
    base += g.num_nodes;
    ++gid;
  }
}

namespace {

std::string find_tu_prefix(const std::string& directory) {
  const std::string marker = "_graph_indicator.txt";
  for (const auto& entry : fs::directory_iterator(directory)) {
    std::string fname = entry.path().filename().string();
    if (fname.size() > marker.size() &&
        fname.compare(fname.size() - marker.size(), marker.size(), marker) == 0)
      return fname.substr(0, fname.size() - marker.size());
  }
  throw std::runtime_error("TU dataset: no *_graph_indicator.txt in " +
                           directory);
}

std::vector<long> read_int_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("TU dataset: missing file " + path);
  std::vector<long> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r,") == std::string::npos) continue;
    out.push_back(std::stol(line));
  }
  return out;
}

}  // namespace

GraphDataset load_tu_dataset(const std::string& directory) {
  if (!fs::is_directory(directory))
    throw std::runtime_error("TU dataset: not a directory: " + directory);
  std::string prefix = find_tu_prefix(directory);
  auto file = [&](const std::string& suffix) {
    return (fs::path(directory) / (prefix + suffix)).string();
  };

  std::vector<long> indicator = read_int_lines(file("_graph_indicator.txt"));
  std::vector<long> graph_labels = read_int_lines(file("_graph_labels.txt"));
  if (indicator.empty()) throw std::runtime_error("TU dataset: empty indicator");

  long num_graphs = *std::max_element(indicator.begin(), indicator.end());
  if (static_cast<long>(graph_labels.size()) != num_graphs)
    throw std::runtime_error("TU dataset: " + std::to_string(graph_labels.size()) +
                             " labels for " + std::to_string(num_graphs) +
                             " graphs");
  // graph ids must be 1..N and grouped contiguously
  std::vector<long> nodes_per_graph(num_graphs, 0);
  long prev = 1;
  for (long id : indicator) {
    if (id < 1 || id > num_graphs || id < prev)
      throw std::runtime_error("TU dataset: non-contiguous graph indicator");
    prev = id;
    ++nodes_per_graph[id - 1];
  }
  for (long c : nodes_per_graph)
    if (c == 0)
      throw std::runtime_error("TU dataset: non-contiguous graph indicator");

  // optional node labels become one-hot features
  std::vector<long> node_labels;
  bool have_node_labels = fs::exists(file("_node_labels.txt"));
  if (have_node_labels) {
    node_labels = read_int_lines(file("_node_labels.txt"));
    if (node_labels.size() != indicator.size())
      throw std::runtime_error("TU dataset: node label count mismatch");
  }
  std::map<long, int> node_label_index;
  if (have_node_labels) {
    std::set<long> distinct(node_labels.begin(), node_labels.end());
    int idx = 0;
    for (long v : distinct) node_label_index[v] = idx++;
  }
  int fdim = have_node_labels ? static_cast<int>(node_label_index.size()) : 1;

  std::map<long, int> class_index;
  {
    std::set<long> distinct(graph_labels.begin(), graph_labels.end());
    int idx = 0;
    for (long v : distinct) class_index[v] = idx++;
  }

  GraphDataset ds;
  ds.num_classes = static_cast<int>(class_index.size());
  ds.feature_dim = fdim;
  ds.name = prefix;

  std::vector<long> node_offset(num_graphs + 1, 0);
  for (long i = 0; i < num_graphs; ++i)
    node_offset[i + 1] = node_offset[i] + nodes_per_graph[i];

  for (long i = 0; i < num_graphs; ++i) {
    Graph g(static_cast<int>(nodes_per_graph[i]), fdim);
    g.label = class_index.at(graph_labels[i]);
    for (long u = 0; u < nodes_per_graph[i]; ++u) {
      if (have_node_labels)
        g.feature(static_cast<int>(u),
                  node_label_index.at(node_labels[node_offset[i] + u])) = 1.0;
      else
        g.feature(static_cast<int>(u), 0) = 1.0;
    }
    ds.graphs.push_back(std::move(g));
  }

  // edge list: "u, v" with 1-indexed global node ids
  std::ifstream ea(file("_A.txt"));
  if (!ea) throw std::runtime_error("TU dataset: missing file " + file("_A.txt"));
  std::string line;
  long total_nodes = node_offset[num_graphs];
  while (std::getline(ea, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream es(line);
    long u = 0, v = 0;
    if (!(es >> u >> v))
      throw std::runtime_error("TU dataset: bad edge line '" + line + "'");
    if (u < 1 || v < 1 || u > total_nodes || v > total_nodes)
      throw std::runtime_error("TU dataset: node id out of range in edge " +
                               std::to_string(u) + "," + std::to_string(v));
    long gu = indicator[u - 1], gv = indicator[v - 1];
    if (gu != gv)
      throw std::runtime_error("TU dataset: edge crosses graphs " +
                               std::to_string(gu) + " and " + std::to_string(gv));
    if (u == v) continue;  // stray self-loops are dropped
    Graph& g = ds.graphs[gu - 1];
    g.add_edge(static_cast<int>(u - 1 - node_offset[gu - 1]),
               static_cast<int>(v - 1 - node_offset[gu - 1]));
  }
  ds.validate();
  return ds;
}

}  // namespace gmerge

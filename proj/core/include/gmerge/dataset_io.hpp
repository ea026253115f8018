#pragma once

#include <string>

#include "gmerge/graph.hpp"

namespace gmerge {

/// Line-oriented dataset file:
///   graphs=<N> classes=<c> dim=<d>
///   g <n> <label>
///   ... n feature lines of d space-separated floats ...
///   e <u> <v>        (0-indexed, u < v)
/// Floats are written with 17 significant digits so a write/read round-trip
/// reproduces every double bit-exactly.
void write_dataset(const std::string& path, const GraphDataset& ds);
GraphDataset read_dataset(const std::string& path);

/// Exports a dataset as a standard TU-format directory (<name>_A.txt,
/// <name>_graph_indicator.txt, <name>_graph_labels.txt, <name>_node_labels.txt).
/// Node labels are the argmax feature column.
void write_tu_dataset(const std::string& directory, const std::string& name,
                      const GraphDataset& ds);

/// Reads a TU-format directory. Node labels become one-hot features; when
/// absent every node gets a single constant-1 feature. Graph labels are
/// remapped to 0..c-1 in sorted order; the adjacency is symmetrized.
GraphDataset load_tu_dataset(const std::string& directory);

}  // namespace gmerge

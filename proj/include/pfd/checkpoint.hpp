// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "pfd/models.hpp"

namespace pfd {

/// Every parameter and batch-norm statistic of a graph, by unique name, in a
/// fixed order (student first).
std::vector<std::pair<std::string, Tensor*>> named_tensors(const ModelGraph& graph);

/// Binary checkpoint: magic, version, model config text, schema JSON, then
/// named tensors as little-endian doubles. Loading rebuilds the graph from
/// the stored config and schema and restores every tensor bit-exactly.
void save_checkpoint(const ModelGraph& graph, const std::string& path);
ModelGraph load_checkpoint(const std::string& path);

/// SHA-256 of the checkpoint file.
std::string checkpoint_hash(const std::string& path);

}  // namespace pfd

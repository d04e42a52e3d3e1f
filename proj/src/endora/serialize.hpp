#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "endora/tensor.hpp"

namespace endora::io {

/// Single-file container of named float64 tensors plus a free-form JSON
/// metadata header. Used for checkpoints, replayed prior maps and
/// multi-frame clip files.
///
/// Layout: 8-byte magic "ENDTENS1", u64 little-endian header length, the
/// UTF-8 JSON header, then the raw tensor payloads in header order.
struct TensorFile {
    nlohmann::json meta;
    std::map<std::string, Tensor> tensors;

    void save(const std::filesystem::path& path) const;
    static TensorFile load(const std::filesystem::path& path);

    const Tensor& get(const std::string& name) const;
};

/// Write bytes to `path` via a temp file in the same directory plus rename,
/// so readers never observe a partial file.
void atomic_write(const std::filesystem::path& path, const std::string& bytes);

}  // namespace endora::io

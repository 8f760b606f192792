#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "dive/tensor.hpp"

namespace dive {

// Flat named-array archive: a JSON manifest (name, dtype, shape, offset,
// per-buffer sha256) followed by raw little-endian float32 buffers.
// Loading verifies the manifest lists every array and that hashes match.
struct ArrayArchive {
    std::map<std::string, Tensor> arrays;
    std::map<std::string, std::string> metadata;  // scalar metadata, stringly typed

    void save(const std::filesystem::path& path) const;
    static ArrayArchive load(const std::filesystem::path& path);
};

std::string sha256_hex(const void* data, size_t len);
std::string sha256_file_hex(const std::filesystem::path& path);

}  // namespace dive

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "uaf/tensor.hpp"

namespace uaf {

// Versioned tensor container: a text header naming tensors, shapes and byte
// offsets, followed by raw little-endian binary32 payloads. Round trips are
// bit-exact on the stored f32 values.
struct Checkpoint {
    std::map<std::string, std::string> meta;
    std::vector<std::pair<std::string, Tensor>> tensors;

    void add(const std::string& name, const Tensor& t) { tensors.emplace_back(name, t); }
    const Tensor* find(const std::string& name) const;
    Tensor require(const std::string& name) const;
    std::string meta_at(const std::string& key) const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// FNV-1a over the f32 little-endian bytes of the given tensors, in order.
uint64_t hash_tensors(const std::vector<Tensor>& tensors);

}  // namespace uaf

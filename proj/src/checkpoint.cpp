#include "uaf/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace uaf {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload assumes a little-endian host");

const Tensor* Checkpoint::find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return &t;
    return nullptr;
}

Tensor Checkpoint::require(const std::string& name) const {
    const Tensor* t = find(name);
    if (!t) throw std::runtime_error("checkpoint: missing tensor " + name);
    return *t;
}

std::string Checkpoint::meta_at(const std::string& key) const {
    auto it = meta.find(key);
    if (it == meta.end()) throw std::runtime_error("checkpoint: missing meta key " + key);
    return it->second;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::ostringstream header;
    header << "UAFCKPT 1\n";
    for (const auto& [k, v] : ckpt.meta) header << "meta " << k << " " << v << "\n";
    uint64_t offset = 0;
    for (const auto& [name, t] : ckpt.tensors) {
        header << "tensor " << name << " " << t.shape().size();
        for (int d : t.shape()) header << " " << d;
        header << " " << offset << " " << t.size() << "\n";
        offset += static_cast<uint64_t>(t.size()) * sizeof(float);
    }
    header << "end\n";

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    out << header.str();
    std::vector<float> buf;
    for (const auto& [name, t] : ckpt.tensors) {
        buf.resize(t.data().size());
        for (size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(t.data()[i]);
        out.write(reinterpret_cast<const char*>(buf.data()),
                  static_cast<std::streamsize>(buf.size() * sizeof(float)));
    }
    if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line != "UAFCKPT 1")
        throw std::runtime_error("checkpoint: bad magic in " + path);

    Checkpoint ckpt;
    struct Entry {
        std::string name;
        std::vector<int> shape;
        uint64_t offset, count;
    };
    std::vector<Entry> entries;
    while (std::getline(in, line)) {
        if (line == "end") break;
        std::istringstream ls(line);
        std::string kind;
        ls >> kind;
        if (kind == "meta") {
            std::string key;
            ls >> key;
            std::string value;
            std::getline(ls, value);
            if (!value.empty() && value[0] == ' ') value.erase(0, 1);
            ckpt.meta[key] = value;
        } else if (kind == "tensor") {
            Entry e;
            size_t ndim;
            ls >> e.name >> ndim;
            e.shape.resize(ndim);
            for (auto& d : e.shape) ls >> d;
            ls >> e.offset >> e.count;
            if (!ls) throw std::runtime_error("checkpoint: malformed tensor line");
            entries.push_back(std::move(e));
        } else {
            throw std::runtime_error("checkpoint: unknown header line: " + line);
        }
    }

    const std::streampos payload_start = in.tellg();
    std::vector<float> buf;
    for (const auto& e : entries) {
        in.seekg(payload_start + static_cast<std::streamoff>(e.offset));
        buf.resize(e.count);
        in.read(reinterpret_cast<char*>(buf.data()),
                static_cast<std::streamsize>(e.count * sizeof(float)));
        if (!in) throw std::runtime_error("checkpoint: truncated payload in " + path);
        std::vector<double> vals(buf.begin(), buf.end());
        ckpt.add(e.name, Tensor::from_data(e.shape, std::move(vals)));
    }
    return ckpt;
}

uint64_t hash_tensors(const std::vector<Tensor>& tensors) {
    uint64_t h = 1469598103934665603ull;
    for (const auto& t : tensors) {
        for (double v : t.data()) {
            const float f = static_cast<float>(v);
            unsigned char bytes[sizeof(float)];
            std::memcpy(bytes, &f, sizeof(float));
            for (unsigned char b : bytes) {
                h ^= b;
                h *= 1099511628211ull;
            }
        }
    }
    return h;
}

}  // namespace uaf

#include "tsfb/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "tsfb/errors.hpp"

namespace tsfb {
namespace {

constexpr char kMagic[4] = {'T', 'S', 'F', 'C'};
constexpr uint16_t kFormatVersion = 1;

template <typename T>
void write_pod(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw DataError("checkpoint: truncated file");
    return v;
}

}  // namespace

void Checkpoint::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("checkpoint: cannot open for write: " + path);
    os.write(kMagic, 4);
    write_pod<uint16_t>(os, kFormatVersion);
    std::string desc = descriptor.dump();
    write_pod<uint32_t>(os, static_cast<uint32_t>(desc.size()));
    os.write(desc.data(), std::streamsize(desc.size()));
    for (const auto& [name, t] : params) {
        write_pod<uint32_t>(os, static_cast<uint32_t>(name.size()));
        os.write(name.data(), std::streamsize(name.size()));
        write_pod<uint32_t>(os, static_cast<uint32_t>(t.rows));
        write_pod<uint32_t>(os, static_cast<uint32_t>(t.cols));
        os.write(reinterpret_cast<const char*>(t.data.data()),
                 std::streamsize(t.data.size() * sizeof(double)));
    }
    if (!os) throw DataError("checkpoint: write failed: " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("checkpoint: cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw DataError("checkpoint: bad magic in " + path);
    uint16_t ver = read_pod<uint16_t>(is);
    if (ver != kFormatVersion)
        throw DataError("checkpoint: unsupported format version " + std::to_string(ver));
    uint32_t dlen = read_pod<uint32_t>(is);
    std::string desc(dlen, '\0');
    is.read(desc.data(), dlen);
    if (!is) throw DataError("checkpoint: truncated descriptor");
    Checkpoint ck;
    try {
        ck.descriptor = nlohmann::json::parse(desc);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("checkpoint: bad descriptor json: ") + e.what());
    }
    if (!ck.descriptor.contains("params") || !ck.descriptor["params"].is_array())
        throw DataError("checkpoint: descriptor missing params list");
    for (const auto& pj : ck.descriptor["params"]) {
        uint32_t nlen = read_pod<uint32_t>(is);
        std::string name(nlen, '\0');
        is.read(name.data(), nlen);
        if (!is) throw DataError("checkpoint: truncated param name");
        if (name != pj.get<std::string>())
            throw DataError("checkpoint: blob order disagrees with descriptor (" + name + ")");
        int rows = int(read_pod<uint32_t>(is));
        int cols = int(read_pod<uint32_t>(is));
        Tensor t(rows, cols);
        is.read(reinterpret_cast<char*>(t.data.data()),
                std::streamsize(t.data.size() * sizeof(double)));
        if (!is) throw DataError("checkpoint: truncated data for " + name);
        ck.params.emplace_back(std::move(name), std::move(t));
    }
    return ck;
}

Checkpoint Checkpoint::from_store(const ParamStore& store, nlohmann::json descriptor) {
    Checkpoint ck;
    ck.descriptor = std::move(descriptor);
    auto names = nlohmann::json::array();
    for (const auto& [name, v] : store.all()) {
        names.push_back(name);
        ck.params.emplace_back(name, v->val);
    }
    ck.descriptor["params"] = std::move(names);
    return ck;
}

void Checkpoint::restore_into(ParamStore& store) const {
    for (const auto& [name, t] : params) {
        if (!store.has(name)) throw DataError("checkpoint: store lacks param " + name);
        Var v = store.get(name);
        if (v->val.rows != t.rows || v->val.cols != t.cols)
            throw DimensionError("checkpoint: shape mismatch for " + name);
        v->val = t;
    }
}

bool Checkpoint::bitwise_equal(const Checkpoint& other) const {
    if (descriptor != other.descriptor) return false;
    if (params.size() != other.params.size()) return false;
    for (size_t i = 0; i < params.size(); ++i) {
        if (params[i].first != other.params[i].first) return false;
        const Tensor& a = params[i].second;
        const Tensor& b = other.params[i].second;
        if (a.rows != b.rows || a.cols != b.cols) return false;
        if (std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) != 0)
            return false;
    }
    return true;
}

}  // namespace tsfb

#include "endora/serialize.hpp"

#include <cstring>
#include <fstream>

namespace endora::io {

namespace {
constexpr char kMagic[8] = {'E', 'N', 'D', 'T', 'E', 'N', 'S', '1'};

void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint64_t read_u64(std::istream& in) {
    unsigned char buf[8];
    in.read(reinterpret_cast<char*>(buf), 8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
    return v;
}
}  // namespace

void atomic_write(const std::filesystem::path& path, const std::string& bytes) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot open for writing: " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw DataError("write failed: " + tmp.string());
    }
    fs::rename(tmp, path);
}

void TensorFile::save(const std::filesystem::path& path) const {
    nlohmann::json header;
    header["meta"] = meta;
    auto& list = header["tensors"] = nlohmann::json::array();
    uint64_t offset = 0;
    for (const auto& [name, t] : tensors) {
        list.push_back({{"name", name}, {"shape", t.shape}, {"offset", offset}, {"dtype", "f64"}});
        offset += static_cast<uint64_t>(t.numel()) * sizeof(double);
    }
    const std::string hdr = header.dump();

    std::string bytes;
    bytes.reserve(16 + hdr.size() + offset);
    bytes.append(kMagic, 8);
    put_u64(bytes, hdr.size());
    bytes += hdr;
    for (const auto& [name, t] : tensors)
        bytes.append(reinterpret_cast<const char*>(t.data.data()), t.data.size() * sizeof(double));
    atomic_write(path, bytes);
}

TensorFile TensorFile::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open: " + path.string());
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0) throw DataError("not a tensor container: " + path.string());
    const uint64_t hdr_len = read_u64(in);
    std::string hdr(hdr_len, '\0');
    in.read(hdr.data(), static_cast<std::streamsize>(hdr_len));
    if (!in) throw DataError("truncated header: " + path.string());

    nlohmann::json header = nlohmann::json::parse(hdr, nullptr, false);
    if (header.is_discarded()) throw DataError("corrupt header: " + path.string());

    TensorFile tf;
    tf.meta = header.value("meta", nlohmann::json::object());
    const std::streampos data_start = in.tellg();
    for (const auto& entry : header.at("tensors")) {
        const std::string name = entry.at("name");
        Shape shape = entry.at("shape").get<Shape>();
        const uint64_t offset = entry.at("offset");
        Tensor t(shape);
        in.seekg(data_start + static_cast<std::streamoff>(offset));
        in.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * sizeof(double)));
        if (!in) throw DataError("truncated tensor '" + name + "' in " + path.string());
        tf.tensors.emplace(name, std::move(t));
    }
    return tf;
}

const Tensor& TensorFile::get(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw DataError("tensor '" + name + "' missing from container");
    return it->second;
}

}  // namespace endora::io

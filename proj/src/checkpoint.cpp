#include "dive/checkpoint.hpp"

#include <openssl/evp.h>

#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

namespace dive {

namespace {

constexpr char kMagic[8] = {'D', 'I', 'V', 'E', 'A', 'R', 'C', '1'};

void write_u64(std::ofstream& out, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

uint64_t read_u64(std::ifstream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

}  // namespace

std::string sha256_hex(const void* data, size_t len) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int dlen = 0;
    if (!EVP_Digest(data, len, digest, &dlen, EVP_sha256(), nullptr))
        throw std::runtime_error("sha256 failed");
    static const char* hex = "0123456789abcdef";
    std::string s;
    s.reserve(dlen * 2);
    for (unsigned int i = 0; i < dlen; ++i) {
        s.push_back(hex[digest[i] >> 4]);
        s.push_back(hex[digest[i] & 0xf]);
    }
    return s;
}

std::string sha256_file_hex(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
    return sha256_hex(bytes.data(), bytes.size());
}

void ArrayArchive::save(const std::filesystem::path& path) const {
    nlohmann::json manifest;
    manifest["format"] = "dive-array-archive-v1";
    manifest["metadata"] = metadata;
    uint64_t offset = 0;
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& [name, t] : arrays) {
        const uint64_t nbytes = static_cast<uint64_t>(t.data.size()) * sizeof(float);
        entries.push_back({{"name", name},
                           {"dtype", "f32"},
                           {"shape", t.shape},
                           {"offset", offset},
                           {"nbytes", nbytes},
                           {"sha256", sha256_hex(t.data.data(), nbytes)}});
        offset += nbytes;
    }
    manifest["arrays"] = std::move(entries);
    const std::string mstr = manifest.dump();

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(kMagic, sizeof(kMagic));
    write_u64(out, mstr.size());
    out.write(mstr.data(), static_cast<std::streamsize>(mstr.size()));
    for (const auto& [name, t] : arrays)
        out.write(reinterpret_cast<const char*>(t.data.data()),
                  static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

ArrayArchive ArrayArchive::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("not a dive array archive: " + path.string());
    const uint64_t mlen = read_u64(in);
    std::string mstr(mlen, '\0');
    in.read(mstr.data(), static_cast<std::streamsize>(mlen));
    if (!in) throw std::runtime_error("truncated manifest in " + path.string());

    const nlohmann::json manifest = nlohmann::json::parse(mstr);
    ArrayArchive a;
    if (manifest.contains("metadata"))
        a.metadata = manifest["metadata"].get<std::map<std::string, std::string>>();

    const std::streampos data_start = in.tellg();
    for (const auto& e : manifest.at("arrays")) {
        const std::string name = e.at("name").get<std::string>();
        if (e.at("dtype").get<std::string>() != "f32")
            throw std::runtime_error("unsupported dtype for array " + name);
        Tensor t(e.at("shape").get<std::vector<int64_t>>());
        const uint64_t nbytes = e.at("nbytes").get<uint64_t>();
        if (nbytes != t.data.size() * sizeof(float))
            throw std::runtime_error("shape/nbytes mismatch for array " + name);
        in.seekg(data_start + static_cast<std::streamoff>(e.at("offset").get<uint64_t>()));
        in.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(nbytes));
        if (!in) throw std::runtime_error("truncated buffer for array " + name);
        if (sha256_hex(t.data.data(), nbytes) != e.at("sha256").get<std::string>())
            throw std::runtime_error("content hash mismatch for array " + name);
        a.arrays.emplace(name, std::move(t));
    }
    return a;
}

}  // namespace dive

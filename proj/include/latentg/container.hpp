#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "latentg/common.hpp"

namespace latentg {

// On-disk container shared by checkpoints, GMM files and feature stores:
// magic "LGN1", u64-LE JSON header length, UTF-8 JSON header (kind, version,
// config, manifest of {name, shape, dtype, offset}), then raw little-endian
// blobs in manifest order.
struct NamedArray {
    std::string name;
    std::vector<std::int64_t> shape;
    std::vector<float> f32;    // used when dtype == "f32"
    std::vector<double> f64;   // used when dtype == "f64"
    bool is_f64 = false;

    std::size_t count() const {
        std::size_t n = 1;
        for (auto d : shape) n *= static_cast<std::size_t>(d);
        return n;
    }
};

class Container {
public:
    static constexpr char kMagic[4] = {'L', 'G', 'N', '1'};

    std::string kind;
    int version = 1;
    nlohmann::json config;
    std::vector<NamedArray> arrays;

    void add_f32(const std::string& name, std::vector<std::int64_t> shape,
                 std::vector<float> data) {
        NamedArray arr;
        arr.name = name;
        arr.shape = std::move(shape);
        arr.f32 = std::move(data);
        if (arr.count() != arr.f32.size())
            throw ShapeError("container array '" + name + "' shape/data mismatch");
        arrays.push_back(std::move(arr));
    }

    void add_f64(const std::string& name, std::vector<std::int64_t> shape,
                 std::vector<double> data) {
        NamedArray arr;
        arr.name = name;
        arr.shape = std::move(shape);
        arr.f64 = std::move(data);
        arr.is_f64 = true;
        if (arr.count() != arr.f64.size())
            throw ShapeError("container array '" + name + "' shape/data mismatch");
        arrays.push_back(std::move(arr));
    }

    const NamedArray& get(const std::string& name) const {
        for (const auto& arr : arrays)
            if (arr.name == name) return arr;
        throw FormatError("container is missing array '" + name + "'");
    }

    void save(const std::string& path) const {
        nlohmann::json header;
        header["kind"] = kind;
        header["version"] = version;
        header["config"] = config;
        auto& manifest = header["manifest"] = nlohmann::json::array();
        std::uint64_t offset = 0;
        for (const auto& arr : arrays) {
            const std::size_t bytes = arr.count() * (arr.is_f64 ? 8 : 4);
            manifest.push_back({{"name", arr.name},
                                {"shape", arr.shape},
                                {"dtype", arr.is_f64 ? "f64" : "f32"},
                                {"offset", offset}});
            offset += bytes;
        }
        const std::string header_str = header.dump();
        std::ofstream out(path, std::ios::binary);
        if (!out) throw FormatError("cannot write container: " + path);
        out.write(kMagic, 4);
        const std::uint64_t len = header_str.size();
        out.write(reinterpret_cast<const char*>(&len), 8);
        out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
        for (const auto& arr : arrays) {
            if (arr.is_f64)
                out.write(reinterpret_cast<const char*>(arr.f64.data()),
                          static_cast<std::streamsize>(arr.f64.size() * 8));
            else
                out.write(reinterpret_cast<const char*>(arr.f32.data()),
                          static_cast<std::streamsize>(arr.f32.size() * 4));
        }
        if (!out) throw FormatError("write failed: " + path);
    }

    static Container load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw FormatError("cannot open container: " + path);
        char magic[4];
        in.read(magic, 4);
        if (!in || std::memcmp(magic, kMagic, 4) != 0)
            throw FormatError("bad magic in " + path);
        std::uint64_t len = 0;
        in.read(reinterpret_cast<char*>(&len), 8);
        if (!in) throw FormatError("truncated header in " + path);
        std::string header_str(len, '\0');
        in.read(header_str.data(), static_cast<std::streamsize>(len));
        if (!in) throw FormatError("truncated header in " + path);
        nlohmann::json header;
        try {
            header = nlohmann::json::parse(header_str);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("malformed header in " + path + ": " + e.what());
        }
        Container c;
        c.kind = header.value("kind", "");
        c.version = header.value("version", 0);
        if (c.version != 1)
            throw FormatError("unsupported container version " +
                              std::to_string(c.version) + " in " + path);
        c.config = header.value("config", nlohmann::json::object());
        for (const auto& entry : header.at("manifest")) {
            NamedArray arr;
            arr.name = entry.at("name").get<std::string>();
            arr.shape = entry.at("shape").get<std::vector<std::int64_t>>();
            arr.is_f64 = entry.at("dtype").get<std::string>() == "f64";
            const std::size_t n = arr.count();
            if (arr.is_f64) {
                arr.f64.resize(n);
                in.read(reinterpret_cast<char*>(arr.f64.data()),
                        static_cast<std::streamsize>(n * 8));
            } else {
                arr.f32.resize(n);
                in.read(reinterpret_cast<char*>(arr.f32.data()),
                        static_cast<std::streamsize>(n * 4));
            }
            if (!in) throw FormatError("truncated blob '" + arr.name + "' in " + path);
            c.arrays.push_back(std::move(arr));
        }
        return c;
    }
};

}  // namespace latentg

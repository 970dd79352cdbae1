#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "nsdial/tape.hpp"

namespace nsdial {

// Checkpoint = JSON manifest + raw little-endian f32 sidecar, one blob per
// parameter, concatenated in manifest order. Roundtrips bit-exactly.

inline std::string checkpoint_data_path(const std::string& manifest_path) {
    std::filesystem::path p(manifest_path);
    if (p.extension() == ".json") p.replace_extension(".bin");
    else p += ".bin";
    return p.string();
}

inline void save_checkpoint(const std::string& manifest_path, const ParamStoreT<float>& store,
                            const nlohmann::ordered_json& meta = nlohmann::ordered_json::object()) {
    std::string data_path = checkpoint_data_path(manifest_path);
    nlohmann::ordered_json man;
    man["format"] = "nsdial-checkpoint";
    man["version"] = 1;
    man["data"] = std::filesystem::path(data_path).filename().string();
    man["meta"] = meta;
    auto params = nlohmann::ordered_json::array();
    std::ofstream bin(data_path, std::ios::binary | std::ios::trunc);
    if (!bin) throw std::runtime_error("checkpoint: cannot write " + data_path);
    uint64_t offset = 0;
    for (int i = 0; i < store.size(); ++i) {
        const auto& e = store.entry(i);
        nlohmann::ordered_json pj;
        pj["name"] = e.name;
        pj["shape"] = e.value.shape;
        pj["offset"] = offset;
        params.push_back(pj);
        static_assert(sizeof(float) == 4);
        bin.write(reinterpret_cast<const char*>(e.value.data.data()),
                  static_cast<std::streamsize>(e.value.data.size() * 4));
        offset += static_cast<uint64_t>(e.value.data.size()) * 4;
    }
    man["params"] = params;
    bin.close();
    if (!bin) throw std::runtime_error("checkpoint: short write to " + data_path);
    std::ofstream mf(manifest_path, std::ios::trunc);
    if (!mf) throw std::runtime_error("checkpoint: cannot write " + manifest_path);
    mf << man.dump(2) << "\n";
}

// Loads into an existing store whose parameter names and shapes must match the
// manifest exactly. Returns the manifest's meta object.
inline nlohmann::ordered_json load_checkpoint(const std::string& manifest_path,
                                              ParamStoreT<float>& store) {
    std::ifstream mf(manifest_path);
    if (!mf) throw std::runtime_error("checkpoint: cannot open " + manifest_path);
    nlohmann::ordered_json man;
    try {
        man = nlohmann::ordered_json::parse(mf);
    } catch (const std::exception& ex) {
        throw std::runtime_error("checkpoint: bad manifest " + manifest_path + ": " + ex.what());
    }
    if (man.value("format", "") != "nsdial-checkpoint")
        throw std::runtime_error("checkpoint: unrecognized format in " + manifest_path);
    std::filesystem::path dir = std::filesystem::path(manifest_path).parent_path();
    std::string data_name = man.value("data", "");
    std::string data_path =
        data_name.empty() ? checkpoint_data_path(manifest_path) : (dir / data_name).string();
    std::ifstream bin(data_path, std::ios::binary);
    if (!bin) throw std::runtime_error("checkpoint: cannot open " + data_path);
    bin.seekg(0, std::ios::end);
    uint64_t file_size = static_cast<uint64_t>(bin.tellg());

    const auto& params = man.at("params");
    if (static_cast<int>(params.size()) != store.size())
        throw std::runtime_error("checkpoint: parameter count mismatch (manifest " +
                                 std::to_string(params.size()) + ", model " +
                                 std::to_string(store.size()) + ")");
    uint64_t expect = 0;
    for (size_t i = 0; i < params.size(); ++i) {
        const auto& pj = params[i];
        std::string name = pj.at("name");
        int id = store.find(name);
        if (id < 0) throw std::runtime_error("checkpoint: model has no parameter '" + name + "'");
        auto& e = store.entry(id);
        std::vector<int> shape = pj.at("shape").get<std::vector<int>>();
        if (shape != e.value.shape)
            throw std::runtime_error("checkpoint: shape mismatch for '" + name + "'");
        uint64_t off = pj.at("offset");
        if (off != expect)
            throw std::runtime_error("checkpoint: non-contiguous offset for '" + name + "'");
        expect += static_cast<uint64_t>(e.value.numel()) * 4;
    }
    if (file_size != expect)
        throw std::runtime_error("checkpoint: data file is " + std::to_string(file_size) +
                                 " bytes, manifest expects " + std::to_string(expect));
    for (size_t i = 0; i < params.size(); ++i) {
        const auto& pj = params[i];
        auto& e = store.entry(store.find(pj.at("name").get<std::string>()));
        bin.seekg(static_cast<std::streamoff>(pj.at("offset").get<uint64_t>()));
        bin.read(reinterpret_cast<char*>(e.value.data.data()),
                 static_cast<std::streamsize>(e.value.data.size() * 4));
        if (!bin) throw std::runtime_error("checkpoint: truncated read for '" +
                                           pj.at("name").get<std::string>() + "'");
    }
    return man.value("meta", nlohmann::ordered_json::object());
}

}  // namespace nsdial

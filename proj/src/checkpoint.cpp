#include "pcqa/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

namespace pcqa {

namespace {

constexpr char kMagic[8] = {'P', 'C', 'Q', 'A', 'C', 'K', 'P', '1'};

void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, PCQAModel& model, const TrainConfig& cfg) {
    const auto params = model.all_params();

    nlohmann::json header;
    header["format"] = "pcqa-checkpoint";
    header["config"] = serialize_config(cfg);
    header["mos_stats"] = {{"mean", model.mos_stats.mean}, {"std", model.mos_stats.std}};

    std::vector<float> blob;
    nlohmann::json tensors = nlohmann::json::array();
    for (const Tensor* t : params) {
        nlohmann::json entry;
        entry["name"] = t->name;
        entry["shape"] = t->shape;
        entry["dtype"] = "f32";
        entry["offset"] = blob.size();
        entry["count"] = t->size();
        tensors.push_back(entry);
        for (double v : t->value) blob.push_back(static_cast<float>(v));
    }
    header["tensors"] = tensors;

    const std::string header_text = header.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint: " + path);
    out.write(kMagic, sizeof(kMagic));
    write_u32(out, static_cast<std::uint32_t>(header_text.size()));
    out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
    // float32 values are written little-endian; this build assumes an LE host
    out.write(reinterpret_cast<const char*>(blob.data()),
              static_cast<std::streamsize>(blob.size() * sizeof(float)));
    if (!out) throw DataError("short write on checkpoint: " + path);
}

LoadedModel load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw DataError("not a checkpoint file: " + path);
    const std::uint32_t header_len = read_u32(in);
    std::string header_text(header_len, '\0');
    in.read(header_text.data(), header_len);
    if (!in) throw DataError("truncated checkpoint header: " + path);

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_text);
    } catch (const std::exception& e) {
        throw DataError(std::string("corrupt checkpoint header: ") + e.what());
    }

    LoadedModel loaded;
    loaded.config = parse_config_text(header.at("config").get<std::string>());
    loaded.model = build_model(loaded.config);
    loaded.model->mos_stats = MosStats(header.at("mos_stats").at("mean").get<double>(),
                                       header.at("mos_stats").at("std").get<double>());

    std::vector<float> blob;
    {
        std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        if (raw.size() % sizeof(float) != 0) throw DataError("misaligned checkpoint payload");
        blob.resize(raw.size() / sizeof(float));
        std::memcpy(blob.data(), raw.data(), raw.size());
    }

    std::map<std::string, Tensor*> by_name;
    for (Tensor* t : loaded.model->all_params()) by_name[t->name] = t;

    std::size_t matched = 0;
    for (const auto& entry : header.at("tensors")) {
        const auto name = entry.at("name").get<std::string>();
        auto it = by_name.find(name);
        if (it == by_name.end()) throw DataError("checkpoint tensor has no model slot: " + name);
        const auto offset = entry.at("offset").get<std::size_t>();
        const auto count = entry.at("count").get<std::size_t>();
        if (count != it->second->size())
            throw DataError("checkpoint tensor size mismatch for " + name);
        if (offset + count > blob.size()) throw DataError("checkpoint payload out of range for " + name);
        for (std::size_t i = 0; i < count; ++i)
            it->second->value[i] = static_cast<double>(blob[offset + i]);
        ++matched;
    }
    if (matched != by_name.size())
        throw DataError("checkpoint is missing tensors for this model configuration");
    return loaded;
}

}  // namespace pcqa

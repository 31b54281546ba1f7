#include "tkat/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace tkat {

namespace {

constexpr char kMagic[8] = {'T', 'K', 'C', 'P', '0', '0', '0', '1'};

template <typename T>
void write_pod(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error("checkpoint: truncated file");
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, ForecastModel& model,
                     const nlohmann::json& manifest) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    out.write(kMagic, sizeof(kMagic));
    const std::string mstr = manifest.dump();
    write_pod<uint64_t>(out, mstr.size());
    out.write(mstr.data(), static_cast<std::streamsize>(mstr.size()));

    auto params = named_params(model);
    write_pod<uint64_t>(out, params.size());
    for (auto& [name, tensor] : params) {
        write_pod<uint32_t>(out, static_cast<uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod<uint32_t>(out, static_cast<uint32_t>(tensor->rank()));
        for (int64_t dim : tensor->shape()) write_pod<int64_t>(out, dim);
        out.write(reinterpret_cast<const char*>(tensor->data()),
                  static_cast<std::streamsize>(tensor->size() * sizeof(double)));
    }
    if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

nlohmann::json load_checkpoint(const std::string& path, ForecastModel& model) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw std::runtime_error("checkpoint: bad magic in " + path);
    }
    const uint64_t mlen = read_pod<uint64_t>(in);
    std::string mstr(mlen, '\0');
    in.read(mstr.data(), static_cast<std::streamsize>(mlen));
    nlohmann::json manifest = nlohmann::json::parse(mstr);

    auto params = named_params(model);
    std::unordered_map<std::string, Tensor*> by_name;
    for (auto& [name, tensor] : params) by_name[name] = tensor;

    const uint64_t count = read_pod<uint64_t>(in);
    if (count != params.size()) {
        throw std::runtime_error("checkpoint: expected " + std::to_string(params.size()) +
                                 " parameters, file has " + std::to_string(count));
    }
    for (uint64_t i = 0; i < count; ++i) {
        const uint32_t nlen = read_pod<uint32_t>(in);
        std::string name(nlen, '\0');
        in.read(name.data(), nlen);
        const uint32_t rank = read_pod<uint32_t>(in);
        Shape shape(rank);
        for (uint32_t d = 0; d < rank; ++d) shape[d] = read_pod<int64_t>(in);
        std::vector<double> values(static_cast<size_t>(shape_size(shape)));
        in.read(reinterpret_cast<char*>(values.data()),
                static_cast<std::streamsize>(values.size() * sizeof(double)));
        if (!in) throw std::runtime_error("checkpoint: truncated tensor data");
        auto it = by_name.find(name);
        if (it == by_name.end()) {
            throw std::runtime_error("checkpoint: model has no parameter '" + name + "'");
        }
        if (it->second->shape() != shape) {
            throw std::runtime_error("checkpoint: shape mismatch for '" + name + "': model " +
                                     shape_str(it->second->shape()) + " vs file " +
                                     shape_str(shape));
        }
        *it->second = Tensor::from_vector(shape, std::move(values)).set_requires_grad(true);
    }
    return manifest;
}

}  // namespace tkat

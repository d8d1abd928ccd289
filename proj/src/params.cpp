#include "dbgi/params.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace dbgi {

namespace {

std::uint64_t fnv1a(const std::string& text) {
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (const char c : text) {
        hash ^= static_cast<unsigned char>(c);
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

double glorot_bound(const Shape& shape) {
    // matrices: {out, in}; conv kernels: {out, in, kh, kw}
    double fan_in = 1.0, fan_out = 1.0;
    if (shape.size() >= 2) {
        double receptive = 1.0;
        for (std::size_t i = 2; i < shape.size(); ++i) receptive *= static_cast<double>(shape[i]);
        fan_out = static_cast<double>(shape[0]) * receptive;
        fan_in = static_cast<double>(shape[1]) * receptive;
    } else if (shape.size() == 1) {
        fan_in = fan_out = static_cast<double>(shape[0]);
    }
    return std::sqrt(6.0 / (fan_in + fan_out));
}

}  // namespace

Tensor ParameterStore::add(const std::string& name, Shape shape, Init init, bool decay) {
    if (index_.count(name))
        throw ContractViolation("duplicate parameter name: " + name);
    Tensor t;
    switch (init) {
        case Init::zeros:
            t = Tensor::zeros(std::move(shape));
            break;
        case Init::ones:
            t = Tensor::full(std::move(shape), 1.0);
            break;
        case Init::glorot_uniform: {
            const double bound = glorot_bound(shape);
            Rng rng = Rng::derive(seed_, fnv1a(name));
            t = Tensor::zeros(std::move(shape));
            for (double& v : t.data()) v = rng.uniform(-bound, bound);
            break;
        }
    }
    t.set_requires_grad(true);
    index_[name] = params_.size();
    params_.push_back({name, t, true, decay});
    return t;
}

Tensor ParameterStore::add_buffer(const std::string& name, Shape shape, double fill) {
    if (index_.count(name))
        throw ContractViolation("duplicate parameter name: " + name);
    Tensor t = Tensor::full(std::move(shape), fill);
    index_[name] = params_.size();
    params_.push_back({name, t, false, false});
    return t;
}

Tensor ParameterStore::find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractViolation("unknown parameter: " + name);
    return params_[it->second].tensor;
}

std::size_t ParameterStore::trainable_count() const {
    std::size_t n = 0;
    for (const auto& p : params_)
        if (p.trainable) ++n;
    return n;
}

void ParameterStore::zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
}

// ---- checkpoint I/O ----

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

template <typename T>
void write_raw(std::ostream& os, T value) {
    os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_raw(std::istream& is, const std::string& path) {
    T value{};
    is.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!is) throw IoError("truncated checkpoint: " + path);
    return value;
}

constexpr char kMagic[4] = {'D', 'B', 'G', 'I'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

void save_checkpoint(const ParameterStore& store, const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open checkpoint for writing: " + path);
    os.write(kMagic, 4);
    write_raw<std::uint32_t>(os, kVersion);
    write_raw<std::uint32_t>(os, static_cast<std::uint32_t>(store.entries().size()));
    for (const auto& p : store.entries()) {
        if (p.name.size() > 0xffff) throw IoError("parameter name too long: " + p.name);
        write_raw<std::uint16_t>(os, static_cast<std::uint16_t>(p.name.size()));
        os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        const Shape& shape = p.tensor.shape();
        write_raw<std::uint8_t>(os, static_cast<std::uint8_t>(shape.size()));
        for (std::int64_t e : shape) write_raw<std::uint64_t>(os, static_cast<std::uint64_t>(e));
        for (double v : p.tensor.data()) write_raw<float>(os, static_cast<float>(v));
    }
    if (!os) throw IoError("write failure on checkpoint: " + path);
}

void load_checkpoint(ParameterStore& store, const std::string& path, bool allow_missing) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw IoError("not a checkpoint file (bad magic): " + path);
    const auto version = read_raw<std::uint32_t>(is, path);
    if (version != kVersion)
        throw IoError("unsupported checkpoint version " + std::to_string(version) + ": " + path);
    const auto count = read_raw<std::uint32_t>(is, path);

    std::unordered_map<std::string, std::vector<double>> loaded;
    std::unordered_map<std::string, Shape> shapes;
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = read_raw<std::uint16_t>(is, path);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        if (!is) throw IoError("truncated checkpoint: " + path);
        const auto rank = read_raw<std::uint8_t>(is, path);
        Shape shape(rank);
        std::int64_t n = 1;
        for (auto& e : shape) {
            e = static_cast<std::int64_t>(read_raw<std::uint64_t>(is, path));
            n *= e;
        }
        std::vector<double> values(static_cast<std::size_t>(n));
        for (auto& v : values) v = static_cast<double>(read_raw<float>(is, path));
        loaded.emplace(name, std::move(values));
        shapes.emplace(name, std::move(shape));
    }

    for (auto& p : store.entries()) {
        auto it = loaded.find(p.name);
        if (it == loaded.end()) {
            if (allow_missing) continue;
            throw IoError("checkpoint is missing tensor '" + p.name + "': " + path);
        }
        if (shapes.at(p.name) != p.tensor.shape())
            throw IoError("checkpoint tensor '" + p.name + "' has shape " +
                          shape_str(shapes.at(p.name)) + ", model expects " +
                          shape_str(p.tensor.shape()));
        p.tensor.data() = it->second;
    }
}

}  // namespace dbgi

#include "caformer/params.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace caformer {

NdArray& ParamStore::add(const std::string& name, NdArray value) {
    if (index_.count(name)) throw ContractError("ParamStore::add: duplicate '" + name + "'");
    require_finite(value, "ParamStore::add");
    value.requires_grad = true;
    index_[name] = items_.size();
    items_.emplace_back(name, std::move(value));
    return items_.back().second;
}

bool ParamStore::contains(const std::string& name) const { return index_.count(name) != 0; }

NdArray& ParamStore::at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("ParamStore::at: unknown '" + name + "'");
    return items_[it->second].second;
}

const NdArray& ParamStore::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("ParamStore::at: unknown '" + name + "'");
    return items_[it->second].second;
}

std::size_t ParamStore::total_size() const {
    std::size_t n = 0;
    for (const auto& [name, v] : items_) n += v.size();
    return n;
}

std::map<std::string, tape::Var> ParamStore::leaves(tape::Tape& t) const {
    std::map<std::string, tape::Var> vars;
    for (const auto& [name, v] : items_) vars.emplace(name, t.leaf(name, v));
    return vars;
}

NdArray init_weight(Rng& rng, std::size_t fan_in, std::size_t fan_out) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<double> data(fan_in * fan_out);
    for (double& v : data) v = rng.uniform(-bound, bound);
    return NdArray({fan_in, fan_out}, std::move(data));
}

NdArray init_vector(Rng& rng, std::size_t fan_in, std::size_t n) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<double> data(n);
    for (double& v : data) v = rng.uniform(-bound, bound);
    return NdArray({n}, std::move(data));
}

// ------------------------------------------------------------- checkpoint io
//
// Layout (all integers u64 little-endian, floats IEEE f64 little-endian):
//   8 bytes   magic "CAFCKPT1"
//   u64       config length, then that many bytes of JSON
//   u64       parameter count
//   repeated: u64 name length, name bytes,
//             u64 rank, u64 dims[rank],
//             f64 data[prod(dims)]

namespace {

constexpr char kMagic[8] = {'C', 'A', 'F', 'C', 'K', 'P', 'T', '1'};

void put_u64(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(out, bits);
}

std::uint64_t get_u64(std::istream& in, const std::string& path) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8))
        throw ParseError("checkpoint '" + path + "': truncated");
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}

double get_f64(std::istream& in, const std::string& path) {
    const std::uint64_t bits = get_u64(in, path);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

} // namespace

void save_checkpoint(const std::string& path, const ParamStore& params,
                     const std::string& config_json) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("checkpoint '" + path + "': cannot open for writing");
    out.write(kMagic, 8);
    put_u64(out, config_json.size());
    out.write(config_json.data(), static_cast<std::streamsize>(config_json.size()));
    put_u64(out, params.count());
    for (const auto& [name, v] : params.items()) {
        put_u64(out, name.size());
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u64(out, v.rank());
        for (std::size_t d : v.shape()) put_u64(out, d);
        for (std::size_t i = 0; i < v.size(); ++i) put_f64(out, v[i]);
    }
    if (!out) throw ParseError("checkpoint '" + path + "': write failed");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("checkpoint '" + path + "': cannot open");
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
        throw ParseError("checkpoint '" + path + "': bad magic");
    Checkpoint ck;
    const std::uint64_t cfg_len = get_u64(in, path);
    if (cfg_len > (1ull << 24)) throw ParseError("checkpoint '" + path + "': absurd config size");
    ck.config_json.resize(cfg_len);
    if (cfg_len && !in.read(ck.config_json.data(), static_cast<std::streamsize>(cfg_len)))
        throw ParseError("checkpoint '" + path + "': truncated config");
    const std::uint64_t n_params = get_u64(in, path);
    if (n_params > (1ull << 20)) throw ParseError("checkpoint '" + path + "': absurd param count");
    for (std::uint64_t p = 0; p < n_params; ++p) {
        const std::uint64_t name_len = get_u64(in, path);
        if (name_len > (1ull << 16)) throw ParseError("checkpoint '" + path + "': absurd name");
        std::string name(name_len, '\0');
        if (name_len && !in.read(name.data(), static_cast<std::streamsize>(name_len)))
            throw ParseError("checkpoint '" + path + "': truncated name");
        const std::uint64_t rank = get_u64(in, path);
        if (rank > 8) throw ParseError("checkpoint '" + path + "': absurd rank");
        Shape shape(rank);
        std::size_t total = 1;
        for (std::uint64_t d = 0; d < rank; ++d) {
            shape[d] = static_cast<std::size_t>(get_u64(in, path));
            total *= shape[d];
        }
        if (total > (1ull << 28)) throw ParseError("checkpoint '" + path + "': absurd tensor size");
        std::vector<double> data(total);
        for (double& v : data) v = get_f64(in, path);
        ck.params.add(name, NdArray(std::move(shape), std::move(data)));
    }
    return ck;
}

} // namespace caformer

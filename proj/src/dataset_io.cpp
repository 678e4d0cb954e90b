#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "dujad/scenario.hpp"

namespace dujad {

namespace {

constexpr char kMagic[8] = {'D', 'U', 'J', 'A', 'D', 'S', 'E', 'T'};
constexpr std::uint32_t kVersion = 1;

template <class T>
T to_little(T v) {
    if constexpr (std::endian::native == std::endian::big) {
        unsigned char b[sizeof(T)];
        std::memcpy(b, &v, sizeof(T));
        std::reverse(b, b + sizeof(T));
        std::memcpy(&v, b, sizeof(T));
    }
    return v;
}

class Writer {
public:
    explicit Writer(const std::string& path) : path_(path), out_(path, std::ios::binary) {
        if (!out_) throw std::runtime_error("cannot open '" + path + "' for writing");
    }
    template <class T>
    void put(T v) {
        v = to_little(v);
        out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
    }
    void bytes(const char* data, std::size_t n) { out_.write(data, static_cast<std::streamsize>(n)); }
    void matrix(const CMatrix& m) {
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) {
                put(m(r, c).real());
                put(m(r, c).imag());
            }
    }
    void finish() {
        out_.flush();
        if (!out_) throw std::runtime_error("write failed for '" + path_ + "'");
    }

private:
    std::string path_;
    std::ofstream out_;
};

class Reader {
public:
    explicit Reader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
        if (!in_) throw std::runtime_error("cannot open '" + path + "' for reading");
    }
    template <class T>
    T get() {
        T v{};
        in_.read(reinterpret_cast<char*>(&v), sizeof(T));
        if (!in_) throw std::runtime_error("truncated instance file '" + path_ + "'");
        return to_little(v);
    }
    void bytes(char* data, std::size_t n) {
        in_.read(data, static_cast<std::streamsize>(n));
        if (!in_) throw std::runtime_error("truncated instance file '" + path_ + "'");
    }
    CMatrix matrix(Eigen::Index rows, Eigen::Index cols) {
        CMatrix m(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c) {
                const double re = get<double>();
                const double im = get<double>();
                m(r, c) = Complex(re, im);
            }
        return m;
    }

private:
    std::string path_;
    std::ifstream in_;
};

}  // namespace

void write_instances(const std::string& path, std::span<const Instance> instances) {
    Writer w(path);
    w.bytes(kMagic, sizeof(kMagic));
    w.put(kVersion);
    w.put(static_cast<std::uint64_t>(instances.size()));
    const Instance* first = instances.empty() ? nullptr : &instances.front();
    const std::uint64_t N = first ? first->N() : 0;
    const std::uint64_t M = first ? first->M : 0;
    const std::uint64_t P = first ? first->P : 0;
    const std::uint64_t R_P = first ? first->R_P() : 0;
    const std::uint64_t R_D = first ? first->R_D() : 0;
    for (auto v : {N, M, P, R_P, R_D}) w.put(v);
    for (const auto& inst : instances) {
        if (static_cast<std::uint64_t>(inst.N()) != N || static_cast<std::uint64_t>(inst.M) != M ||
            static_cast<std::uint64_t>(inst.P) != P || static_cast<std::uint64_t>(inst.R_P()) != R_P ||
            static_cast<std::uint64_t>(inst.R_D()) != R_D) {
            throw std::invalid_argument("write_instances: instances must share dimensions");
        }
        w.bytes(reinterpret_cast<const char*>(inst.xi.data()), inst.xi.size());
        w.matrix(inst.Y);
        w.matrix(inst.H);
        w.matrix(inst.X_P);
        w.matrix(inst.X_D);
        w.matrix(inst.noise);
    }
    w.finish();
}

std::vector<Instance> read_instances(const std::string& path) {
    Reader r(path);
    char magic[8];
    r.bytes(magic, sizeof(magic));
    if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw std::runtime_error("'" + path + "' is not an instance file");
    }
    const auto version = r.get<std::uint32_t>();
    if (version != kVersion) throw std::runtime_error("'" + path + "': unsupported version " + std::to_string(version));
    const auto count = r.get<std::uint64_t>();
    const auto N = static_cast<Eigen::Index>(r.get<std::uint64_t>());
    const auto M = static_cast<int>(r.get<std::uint64_t>());
    const auto P = static_cast<int>(r.get<std::uint64_t>());
    const auto R_P = static_cast<Eigen::Index>(r.get<std::uint64_t>());
    const auto R_D = static_cast<Eigen::Index>(r.get<std::uint64_t>());
    const Eigen::Index MP = static_cast<Eigen::Index>(M) * P;

    std::vector<Instance> out;
    out.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        Instance inst;
        inst.M = M;
        inst.P = P;
        inst.xi.resize(N);
        r.bytes(reinterpret_cast<char*>(inst.xi.data()), inst.xi.size());
        inst.Y = r.matrix(MP, R_P + R_D);
        inst.H = r.matrix(MP, N);
        inst.X_P = r.matrix(N, R_P);
        inst.X_D = r.matrix(N, R_D);
        inst.noise = r.matrix(MP, R_P + R_D);
        out.push_back(std::move(inst));
    }
    return out;
}

}  // namespace dujad

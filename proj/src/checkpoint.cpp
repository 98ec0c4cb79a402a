#include "trackattr/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

#include "trackattr/error.hpp"

namespace trackattr {

static_assert(std::endian::native == std::endian::little,
              "checkpoint io assumes a little-endian host");
static_assert(std::numeric_limits<double>::is_iec559, "checkpoint io assumes IEEE-754 doubles");

namespace {

constexpr char kMagic[8] = {'N', 'T', 'C', 'K', 'P', 'T', '0', '1'};
constexpr std::uint64_t kMaxStringLen = 1u << 20;
constexpr std::uint32_t kMaxNdim = 8;

void write_bytes(std::ofstream& out, const void* p, std::size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
void write_pod(std::ofstream& out, T v) {
    write_bytes(out, &v, sizeof v);
}

void write_string(std::ofstream& out, const std::string& s) {
    write_pod<std::uint64_t>(out, s.size());
    write_bytes(out, s.data(), s.size());
}

void read_bytes(std::ifstream& in, void* p, std::size_t n, const char* what) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n)
        throw IoError(std::string("checkpoint truncated while reading ") + what);
}

template <typename T>
T read_pod(std::ifstream& in, const char* what) {
    T v;
    read_bytes(in, &v, sizeof v, what);
    return v;
}

std::string read_string(std::ifstream& in, const char* what) {
    std::uint64_t len = read_pod<std::uint64_t>(in, what);
    if (len > kMaxStringLen)
        throw ValidationError(std::string("unreasonable string length in checkpoint for ") + what);
    std::string s(len, '\0');
    if (len) read_bytes(in, s.data(), len, what);
    return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::string& spec_echo,
                     const ParamStore& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint: " + path);
    write_bytes(out, kMagic, sizeof kMagic);
    write_pod<std::uint32_t>(out, kCheckpointVersion);
    write_string(out, spec_echo);
    write_pod<std::uint64_t>(out, params.size());
    for (const std::string& name : params.names()) {
        const Tensor& t = params.tensor(name);
        write_string(out, name);
        write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(t.ndim()));
        for (int d : t.shape) write_pod<std::int64_t>(out, d);
        write_bytes(out, t.data.data(), t.data.size() * sizeof(double));
    }
    if (!out) throw IoError("failed writing checkpoint: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    char magic[sizeof kMagic];
    read_bytes(in, magic, sizeof magic, "magic");
    if (std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw ValidationError("not a checkpoint file: " + path);
    LoadedCheckpoint ckpt;
    ckpt.version = read_pod<std::uint32_t>(in, "version");
    if (ckpt.version != kCheckpointVersion)
        throw ValidationError("unsupported checkpoint version " + std::to_string(ckpt.version));
    ckpt.spec_echo = read_string(in, "spec echo");
    std::uint64_t count = read_pod<std::uint64_t>(in, "tensor count");
    for (std::uint64_t i = 0; i < count; ++i) {
        std::string name = read_string(in, "tensor name");
        std::uint32_t ndim = read_pod<std::uint32_t>(in, "ndim");
        if (ndim == 0 || ndim > kMaxNdim)
            throw ValidationError("bad tensor rank in checkpoint: " + std::to_string(ndim));
        std::vector<int> shape(ndim);
        for (std::uint32_t d = 0; d < ndim; ++d) {
            std::int64_t v = read_pod<std::int64_t>(in, "dim");
            if (v <= 0 || v > (1 << 24))
                throw ValidationError("bad tensor dimension in checkpoint: " + std::to_string(v));
            shape[d] = static_cast<int>(v);
        }
        Tensor t(shape);
        read_bytes(in, t.data.data(), t.data.size() * sizeof(double), name.c_str());
        ckpt.params.add(name, std::move(t));
    }
    return ckpt;
}

}  // namespace trackattr

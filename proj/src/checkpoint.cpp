#include "flgn/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <limits>

#include "flgn/errors.hpp"

namespace flgn {

namespace {

constexpr char kMagic[4] = {'F', 'L', 'G', 'N'};

// All integers and doubles are serialized little-endian byte by byte, so
// files are portable regardless of host endianness.
void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double d) {
    uint64_t bits;
    std::memcpy(&bits, &d, sizeof bits);
    put_u64(out, bits);
}

struct Reader {
    const std::string& buf;
    size_t pos = 0;

    void need(size_t n) const {
        if (pos + n > buf.size()) throw CheckpointError("checkpoint file is truncated");
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    double f64() {
        const uint64_t bits = u64();
        double d;
        std::memcpy(&d, &bits, sizeof d);
        return d;
    }
    std::string bytes(size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

// Dimensions large enough that rows*cols*8 cannot be represented (or would
// exceed any plausible file) are rejected before allocation is attempted.
constexpr uint64_t kMaxDim = uint64_t(1) << 32;

}  // namespace

const Tensor& Checkpoint::find(const std::string& name) const {
    for (const auto& nt : tensors)
        if (nt.name == name) return nt.tensor;
    throw CheckpointError("checkpoint has no tensor named '" + name + "'");
}

bool Checkpoint::contains(const std::string& name) const {
    for (const auto& nt : tensors)
        if (nt.name == name) return true;
    return false;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::string out;
    out.append(kMagic, 4);
    put_u32(out, kCheckpointVersion);
    put_u64(out, ckpt.tensors.size());
    for (const auto& nt : ckpt.tensors) {
        put_u32(out, static_cast<uint32_t>(nt.name.size()));
        out.append(nt.name);
        put_u32(out, 2);  // rank: every tensor in this codebase is a matrix
        put_u64(out, static_cast<uint64_t>(nt.tensor->rows));
        put_u64(out, static_cast<uint64_t>(nt.tensor->cols));
        for (int64_t i = 0; i < nt.tensor->size(); ++i) put_f64(out, nt.tensor->data[i]);
    }
    const std::string& meta = ckpt.metadata_json.empty() ? std::string("{}") : ckpt.metadata_json;
    put_u64(out, meta.size());
    out.append(meta);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw PreconditionError("cannot open '" + path + "' for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw PreconditionError("short write to '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw PreconditionError("cannot open checkpoint '" + path + "'");
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    Reader r{buf};
    const std::string magic = r.bytes(4);
    if (std::memcmp(magic.data(), kMagic, 4) != 0)
        throw CheckpointError("'" + path + "' is not a checkpoint file (bad magic)");
    const uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw CheckpointError("checkpoint version " + std::to_string(version) +
                              " unsupported (expected " + std::to_string(kCheckpointVersion) + ")");
    const uint64_t count = r.u64();

    Checkpoint ckpt;
    ckpt.tensors.reserve(count);
    for (uint64_t i = 0; i < count; ++i) {
        const uint32_t name_len = r.u32();
        NamedTensor nt;
        nt.name = r.bytes(name_len);
        const uint32_t rank = r.u32();
        if (rank != 2)
            throw CheckpointError("tensor '" + nt.name + "' has unsupported rank " +
                                  std::to_string(rank));
        const uint64_t rows = r.u64();
        const uint64_t cols = r.u64();
        if (rows == 0 || cols == 0 || rows > kMaxDim || cols > kMaxDim ||
            rows * cols > kMaxDim)
            throw CheckpointError("tensor '" + nt.name + "' has out-of-range dimensions");
        nt.tensor = make_tensor(static_cast<int64_t>(rows), static_cast<int64_t>(cols));
        for (int64_t k = 0; k < nt.tensor->size(); ++k) nt.tensor->data[k] = r.f64();
        ckpt.tensors.push_back(std::move(nt));
    }
    const uint64_t meta_len = r.u64();
    ckpt.metadata_json = r.bytes(meta_len);
    return ckpt;
}

}  // namespace flgn

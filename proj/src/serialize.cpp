#include "agf/serialize.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

namespace agf {

namespace {

constexpr char kTensorMagic[4] = {'A', 'G', 'T', '1'};
constexpr char kWeightsMagic[4] = {'A', 'G', 'W', '1'};
constexpr std::uint16_t kVersion = 1;

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

class Reader {
public:
    Reader(const std::string& bytes, std::string origin)
        : bytes_(bytes), origin_(std::move(origin)) {}

    std::size_t pos() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

    void expect_magic(const char (&magic)[4], const char* what) {
        if (remaining() < 4 || std::memcmp(bytes_.data() + pos_, magic, 4) != 0) {
            fail(std::string("bad magic for ") + what);
        }
        pos_ += 4;
    }

    std::uint16_t u16(const char* field) {
        need(2, field);
        std::uint16_t v = 0;
        for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(byte()) << (8 * i);
        return v;
    }

    std::uint32_t u32(const char* field) {
        need(4, field);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(byte()) << (8 * i);
        return v;
    }

    std::uint64_t u64(const char* field) {
        need(8, field);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(byte()) << (8 * i);
        return v;
    }

    double f64(const char* field) { return std::bit_cast<double>(u64(field)); }

    std::string str(std::size_t n, const char* field) {
        need(n, field);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    void seek(std::size_t p, const char* field) {
        if (p > bytes_.size()) fail(std::string("offset past end of file for ") + field);
        pos_ = p;
    }

    [[noreturn]] void fail(const std::string& msg) const {
        throw ParseError(origin_ + ": " + msg);
    }

private:
    void need(std::size_t n, const char* field) {
        if (remaining() < n) fail(std::string("truncated while reading ") + field);
    }
    std::uint8_t byte() { return static_cast<std::uint8_t>(bytes_[pos_++]); }

    const std::string& bytes_;
    std::string origin_;
    std::size_t pos_ = 0;
};

std::string tensor_bytes(const Tensor& t) {
    std::string out;
    out.append(kTensorMagic, 4);
    put_u16(out, kVersion);
    put_u16(out, static_cast<std::uint16_t>(t.rank()));
    for (std::size_t d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (std::size_t i = 0; i < t.size(); ++i) put_f64(out, t[i]);
    return out;
}

Tensor parse_tensor(Reader& r) {
    r.expect_magic(kTensorMagic, "tensor");
    const std::uint16_t version = r.u16("version");
    if (version != kVersion) r.fail("unsupported tensor version " + std::to_string(version));
    const std::uint16_t ndim = r.u16("ndim");
    if (ndim == 0) r.fail("ndim must be >= 1");
    std::vector<std::size_t> shape(ndim);
    std::size_t count = 1;
    for (std::uint16_t i = 0; i < ndim; ++i) {
        const std::uint32_t d = r.u32("dim");
        if (d == 0) r.fail("dim " + std::to_string(i) + " is zero");
        shape[i] = d;
        count *= d;
    }
    std::vector<double> data(count);
    for (std::size_t i = 0; i < count; ++i) data[i] = r.f64("payload");
    return Tensor(std::move(shape), std::move(data));
}

std::string read_all(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path.string() + ": cannot open file");
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bytes;
}

void write_all(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ParseError(path.string() + ": cannot open file for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ParseError(path.string() + ": write failed");
}

}  // namespace

void write_tensor_file(const std::filesystem::path& path, const Tensor& t) {
    AGF_CHECK(!t.empty(), "write_tensor_file: empty tensor");
    write_all(path, tensor_bytes(t));
}

Tensor read_tensor_file(const std::filesystem::path& path) {
    const std::string bytes = read_all(path);
    Reader r(bytes, path.string());
    Tensor t = parse_tensor(r);
    if (r.remaining() != 0) r.fail("trailing bytes after payload");
    return t;
}

void write_weights_file(const std::filesystem::path& path, const ParamStore& store) {
    const std::vector<std::string> names = store.sorted_names();

    // Manifest size is known up front, so blob offsets can be absolute.
    std::size_t header_size = 4 + 2 + 4;
    for (const std::string& n : names) {
        const Tensor& t = store.value(n);
        header_size += 2 + n.size() + 8 + 2 + 4 * t.rank();
    }

    std::string blobs;
    std::string manifest;
    for (const std::string& n : names) {
        const Tensor& t = store.value(n);
        put_u16(manifest, static_cast<std::uint16_t>(n.size()));
        manifest.append(n);
        put_u64(manifest, header_size + blobs.size());
        put_u16(manifest, static_cast<std::uint16_t>(t.rank()));
        for (std::size_t d : t.shape()) put_u32(manifest, static_cast<std::uint32_t>(d));
        blobs += tensor_bytes(t);
    }

    std::string out;
    out.append(kWeightsMagic, 4);
    put_u16(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(names.size()));
    out += manifest;
    out += blobs;
    write_all(path, out);
}

void read_weights_file(const std::filesystem::path& path, ParamStore& store) {
    const std::string bytes = read_all(path);
    Reader r(bytes, path.string());
    r.expect_magic(kWeightsMagic, "weights");
    const std::uint16_t version = r.u16("version");
    if (version != kVersion) r.fail("unsupported weights version " + std::to_string(version));
    const std::uint32_t count = r.u32("count");
    if (count != store.size()) {
        r.fail("expected " + std::to_string(store.size()) + " parameters, file has " +
               std::to_string(count));
    }

    struct ManifestEntry {
        std::string name;
        std::uint64_t offset;
        std::vector<std::size_t> shape;
    };
    std::vector<ManifestEntry> manifest(count);
    std::string prev_name;
    for (std::uint32_t i = 0; i < count; ++i) {
        ManifestEntry& e = manifest[i];
        const std::uint16_t len = r.u16("name length");
        e.name = r.str(len, "name");
        if (i > 0 && !(prev_name < e.name)) r.fail("manifest not in lexicographic order");
        prev_name = e.name;
        e.offset = r.u64("offset");
        const std::uint16_t ndim = r.u16("ndim");
        e.shape.resize(ndim);
        for (std::uint16_t d = 0; d < ndim; ++d) e.shape[d] = r.u32("dim");
        if (!store.has(e.name)) r.fail("unknown parameter " + e.name);
    }

    std::size_t end = r.pos();
    for (const ManifestEntry& e : manifest) {
        r.seek(e.offset, e.name.c_str());
        Tensor t = parse_tensor(r);
        end = std::max(end, r.pos());
        if (t.shape() != e.shape) r.fail("manifest/blob shape mismatch for " + e.name);
        Tensor& dst = store.value(e.name);
        if (!dst.same_shape(t)) {
            r.fail("parameter " + e.name + " has wrong shape for this configuration");
        }
        dst = std::move(t);
    }
    if (end != bytes.size()) r.fail("trailing bytes after last blob");
}

}  // namespace agf

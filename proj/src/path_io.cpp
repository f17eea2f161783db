#include "pathprof/path_io.hpp"

#include <cstring>
#include <fstream>

#include "pathprof/errors.hpp"

namespace pathprof {

namespace {

constexpr char kMagic[6] = {'E', 'P', 'A', 'T', 'H', '1'};
constexpr std::uint8_t kVersion = 1;
constexpr std::uint8_t kKindPath = 0;
constexpr std::uint8_t kKindProfile = 1;
// Caps a single bitset blob; guards against corrupted length fields.
constexpr std::uint64_t kMaxBits = std::uint64_t{1} << 40;

struct Writer {
    std::vector<std::uint8_t> bytes;

    void raw(const void* data, std::size_t n) {
        const auto* p = static_cast<const std::uint8_t*>(data);
        bytes.insert(bytes.end(), p, p + n);
    }
    void u8(std::uint8_t v) { bytes.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) {
            bytes.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
        }
    }
    void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            bytes.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
        }
    }
    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        u64(bits);
    }
    void bitset(const Bitset& b) {
        u64(static_cast<std::uint64_t>(b.capacity()));
        const auto payload = b.to_bytes();
        raw(payload.data(), payload.size());
    }
};

struct Reader {
    const std::vector<std::uint8_t>& bytes;
    std::size_t pos = 0;

    void need(std::size_t n, const char* what) const {
        if (pos + n > bytes.size()) {
            throw FormatError(std::string("EPATH1: truncated while reading ") + what, pos);
        }
    }
    void raw(void* out, std::size_t n, const char* what) {
        need(n, what);
        std::memcpy(out, bytes.data() + pos, n);
        pos += n;
    }
    std::uint8_t u8(const char* what) {
        need(1, what);
        return bytes[pos++];
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(bytes[pos + static_cast<std::size_t>(i)]) << (8 * i);
        }
        pos += 4;
        return v;
    }
    std::int32_t i32(const char* what) { return static_cast<std::int32_t>(u32(what)); }
    std::uint64_t u64(const char* what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(bytes[pos + static_cast<std::size_t>(i)]) << (8 * i);
        }
        pos += 8;
        return v;
    }
    double f64(const char* what) {
        const std::uint64_t bits = u64(what);
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    Bitset bitset(const char* what) {
        const std::size_t length_offset = pos;
        const std::uint64_t nbits = u64(what);
        if (nbits > kMaxBits) {
            throw FormatError(std::string("EPATH1: implausible bitset length for ") + what,
                              length_offset);
        }
        const std::size_t nbytes = static_cast<std::size_t>((nbits + 7) / 8);
        need(nbytes, what);
        std::vector<std::uint8_t> payload(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                                          bytes.begin() + static_cast<std::ptrdiff_t>(pos + nbytes));
        pos += nbytes;
        try {
            return Bitset::from_bytes(static_cast<std::int64_t>(nbits), payload);
        } catch (const DomainError& e) {
            throw FormatError(std::string("EPATH1: ") + e.what(), length_offset);
        }
    }
};

struct Header {
    Digest256 fingerprint{};
    double theta = 0.0;
    std::uint32_t depth = 0;
    std::uint32_t layer_count = 0;
    std::uint8_t kind = 0;
    std::uint32_t start_rank = 0;
    std::int32_t class_id = 0;
    std::uint64_t image_count = 0;
};

void write_header(Writer& w, const Header& h) {
    w.raw(kMagic, sizeof(kMagic));
    w.u8(kVersion);
    w.raw(h.fingerprint.data(), h.fingerprint.size());
    w.f64(h.theta);
    w.u32(h.depth);
    w.u32(h.layer_count);
    w.u8(h.kind);
    w.u32(h.start_rank);
    w.i32(h.class_id);
    w.u64(h.image_count);
}

Header read_header(Reader& r) {
    char magic[6];
    r.raw(magic, sizeof(magic), "magic");
    if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw FormatError("EPATH1: bad magic", 0);
    }
    const std::size_t version_offset = r.pos;
    const std::uint8_t version = r.u8("version");
    if (version != kVersion) {
        throw FormatError("EPATH1: unsupported version " + std::to_string(version),
                          version_offset);
    }
    Header h;
    r.raw(h.fingerprint.data(), h.fingerprint.size(), "fingerprint");
    h.theta = r.f64("theta");
    h.depth = r.u32("depth");
    h.layer_count = r.u32("layer count");
    h.kind = r.u8("kind");
    h.start_rank = r.u32("start_rank");
    h.class_id = r.i32("class_id");
    h.image_count = r.u64("image_count");
    if (h.layer_count > 100000) {
        throw FormatError("EPATH1: implausible layer count", r.pos - 17);
    }
    return h;
}

void write_layers(Writer& w, const std::vector<PathLayer>& layers) {
    for (const PathLayer& l : layers) {
        w.u32(static_cast<std::uint32_t>(l.layer_index));
        w.bitset(l.neurons);
        w.bitset(l.synapses);
        w.bitset(l.weights);
    }
}

std::vector<PathLayer> read_layers(Reader& r, std::uint32_t count) {
    std::vector<PathLayer> layers;
    layers.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        PathLayer l;
        l.layer_index = static_cast<int>(r.u32("layer index"));
        l.neurons = r.bitset("neuron set");
        l.synapses = r.bitset("synapse set");
        l.weights = r.bitset("weight set");
        layers.push_back(std::move(l));
    }
    if (r.pos != r.bytes.size()) {
        throw FormatError("EPATH1: trailing bytes after last layer", r.pos);
    }
    return layers;
}

std::vector<std::uint8_t> read_file_bytes(const std::string& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) {
        throw IoError("cannot open file", file);
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    if (in.bad()) {
        throw IoError("read failed", file);
    }
    return bytes;
}

void write_file_bytes(const std::string& file, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot create file", file);
    }
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError("write failed", file);
    }
}

}  // namespace

std::vector<std::uint8_t> serialize_path(const EffectivePath& path) {
    Writer w;
    Header h;
    h.fingerprint = path.fingerprint;
    h.theta = path.theta;
    h.depth = static_cast<std::uint32_t>(path.depth);
    h.layer_count = static_cast<std::uint32_t>(path.layers.size());
    h.kind = kKindPath;
    h.start_rank = static_cast<std::uint32_t>(path.start_rank);
    h.class_id = 0;
    h.image_count = 0;
    write_header(w, h);
    write_layers(w, path.layers);
    return std::move(w.bytes);
}

std::vector<std::uint8_t> serialize_profile(const ClassProfile& profile) {
    Writer w;
    Header h;
    h.fingerprint = profile.fingerprint;
    h.theta = profile.theta;
    h.depth = static_cast<std::uint32_t>(profile.depth);
    h.layer_count = static_cast<std::uint32_t>(profile.layers.size());
    h.kind = kKindProfile;
    h.start_rank = 0;
    h.class_id = profile.class_id;
    h.image_count = profile.image_count;
    write_header(w, h);
    write_layers(w, profile.layers);
    return std::move(w.bytes);
}

EffectivePath deserialize_path(const std::vector<std::uint8_t>& bytes) {
    Reader r{bytes};
    const Header h = read_header(r);
    if (h.kind != kKindPath) {
        throw FormatError("EPATH1: expected a path object, found a profile", 0);
    }
    EffectivePath path;
    path.fingerprint = h.fingerprint;
    path.theta = h.theta;
    path.depth = static_cast<int>(h.depth);
    path.start_rank = static_cast<int>(h.start_rank);
    path.layers = read_layers(r, h.layer_count);
    return path;
}

ClassProfile deserialize_profile(const std::vector<std::uint8_t>& bytes) {
    Reader r{bytes};
    const Header h = read_header(r);
    if (h.kind != kKindProfile) {
        throw FormatError("EPATH1: expected a profile object, found a path", 0);
    }
    ClassProfile profile;
    profile.fingerprint = h.fingerprint;
    profile.theta = h.theta;
    profile.depth = static_cast<int>(h.depth);
    profile.class_id = h.class_id;
    profile.image_count = h.image_count;
    profile.layers = read_layers(r, h.layer_count);
    return profile;
}

void write_path_file(const std::string& file, const EffectivePath& path) {
    write_file_bytes(file, serialize_path(path));
}

void write_profile_file(const std::string& file, const ClassProfile& profile) {
    write_file_bytes(file, serialize_profile(profile));
}

EffectivePath read_path_file(const std::string& file) {
    return deserialize_path(read_file_bytes(file));
}

ClassProfile read_profile_file(const std::string& file) {
    return deserialize_profile(read_file_bytes(file));
}

}  // namespace pathprof

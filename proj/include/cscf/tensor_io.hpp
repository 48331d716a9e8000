#pragma once

// Raw tensor container, all multi-byte fields little-endian:
//
//   "CSCF" | u16 version (=1) | u8 type tag | u8 rank | u32 dims[rank]
//   | f32 payload[prod(dims) (+1 for TransferOp)] | u32 CRC-32(header+payload)
//
// Type tags: 1 Image [H,W], 2 CoeffMap [K,H,W], 3 Dictionary [K,k,k],
// 4 TransferOp [K,K+1] (mix rows, then bias, then one trailing ridge value).

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <zlib.h>

#include "cscf/error.hpp"
#include "cscf/grid.hpp"

namespace cscf {

enum class TensorTag : std::uint8_t { image = 1, coeff_map = 2, dictionary = 3, transfer_op = 4 };

inline constexpr std::uint16_t tensor_format_version = 1;
inline constexpr char tensor_magic[4] = {'C', 'S', 'C', 'F'};

// Decoded but untyped record.
struct TensorRecord {
    TensorTag tag{};
    std::vector<std::uint32_t> dims;
    std::vector<float> values;
};

namespace detail {

inline std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
    uLong crc = ::crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed in chunks.
    std::size_t off = 0;
    while (off < bytes.size()) {
        const auto n = static_cast<uInt>(std::min<std::size_t>(bytes.size() - off, 1u << 30));
        crc = ::crc32(crc, bytes.data() + off, n);
        off += n;
    }
    return static_cast<std::uint32_t>(crc);
}

inline void put_u16(std::vector<std::uint8_t> &out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void put_u32(std::vector<std::uint8_t> &out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

inline std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t off) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[off + i]) << (8 * i);
    return v;
}

inline std::uint32_t checked_dim(std::size_t d, const char *what) {
    if (d == 0) throw ArgumentError(std::string(what) + ": zero-sized dimension");
    if (d > std::numeric_limits<std::uint32_t>::max())
        throw ArgumentError(std::string(what) + ": dimension exceeds u32");
    return static_cast<std::uint32_t>(d);
}

inline float to_f32(double v, const char *what) {
    const auto f = static_cast<float>(v);
    if (!std::isfinite(f)) throw ArgumentError(std::string(what) + ": non-finite value");
    return f;
}

} // namespace detail

inline std::vector<std::uint8_t> encode_record(const TensorRecord &rec) {
    std::vector<std::uint8_t> out;
    out.reserve(12 + 4 * rec.dims.size() + 4 * rec.values.size() + 4);
    out.insert(out.end(), tensor_magic, tensor_magic + 4);
    detail::put_u16(out, tensor_format_version);
    out.push_back(static_cast<std::uint8_t>(rec.tag));
    out.push_back(static_cast<std::uint8_t>(rec.dims.size()));
    for (auto d : rec.dims) detail::put_u32(out, d);
    for (float f : rec.values) detail::put_u32(out, std::bit_cast<std::uint32_t>(f));
    detail::put_u32(out, detail::crc32_of(out));
    return out;
}

namespace detail {

inline std::size_t expected_values(TensorTag tag, const std::vector<std::uint32_t> &dims,
                                   std::size_t offset) {
    std::size_t n = 1;
    for (auto d : dims) {
        if (d == 0) throw FormatError("zero dimension in tensor header", offset);
        if (n > std::numeric_limits<std::size_t>::max() / 4 / d)
            throw FormatError("tensor dimension overflow", offset);
        n *= d;
    }
    if (tag == TensorTag::transfer_op) n += 1;
    return n;
}

inline std::size_t expected_rank(TensorTag tag) {
    switch (tag) {
    case TensorTag::image: return 2;
    case TensorTag::coeff_map: return 3;
    case TensorTag::dictionary: return 3;
    case TensorTag::transfer_op: return 2;
    }
    return 0;
}

} // namespace detail

// Decodes one record starting at `offset`; advances `offset` past it.
inline TensorRecord decode_record(std::span<const std::uint8_t> bytes, std::size_t &offset) {
    const std::size_t start = offset;
    auto need = [&](std::size_t n, const char *what) {
        if (bytes.size() - offset < n)
            throw FormatError(std::string("truncated tensor: ") + what, offset);
    };
    need(8, "header");
    if (std::memcmp(bytes.data() + offset, tensor_magic, 4) != 0)
        throw FormatError("magic mismatch", offset);
    offset += 4;
    const auto version =
        static_cast<std::uint16_t>(bytes[offset] | (static_cast<std::uint16_t>(bytes[offset + 1]) << 8));
    if (version != tensor_format_version)
        throw FormatError("unsupported format version " + std::to_string(version), offset);
    offset += 2;
    const auto tag_byte = bytes[offset];
    if (tag_byte < 1 || tag_byte > 4)
        throw FormatError("unknown type tag " + std::to_string(tag_byte), offset);
    TensorRecord rec;
    rec.tag = static_cast<TensorTag>(tag_byte);
    offset += 1;
    const std::size_t rank = bytes[offset];
    if (rank != detail::expected_rank(rec.tag))
        throw FormatError("rank " + std::to_string(rank) + " invalid for type tag", offset);
    offset += 1;
    need(4 * rank, "dims");
    for (std::size_t i = 0; i < rank; ++i, offset += 4) rec.dims.push_back(detail::get_u32(bytes, offset));
    const std::size_t count = detail::expected_values(rec.tag, rec.dims, offset - 4 * rank);
    need(4 * count, "payload");
    rec.values.resize(count);
    for (std::size_t i = 0; i < count; ++i, offset += 4)
        rec.values[i] = std::bit_cast<float>(detail::get_u32(bytes, offset));
    need(4, "checksum");
    const auto stored = detail::get_u32(bytes, offset);
    const auto actual = detail::crc32_of(bytes.subspan(start, offset - start));
    if (stored != actual) throw FormatError("checksum failure", offset);
    offset += 4;
    return rec;
}

// --- typed conversions ------------------------------------------------------

inline TensorRecord to_record(const Image &img) {
    TensorRecord r{TensorTag::image,
                   {detail::checked_dim(img.height(), "Image"), detail::checked_dim(img.width(), "Image")},
                   {}};
    r.values.reserve(img.size());
    for (double v : img.data()) r.values.push_back(detail::to_f32(v, "Image"));
    return r;
}

inline TensorRecord to_record(const CoeffMap &s) {
    TensorRecord r{TensorTag::coeff_map,
                   {detail::checked_dim(s.atoms(), "CoeffMap"), detail::checked_dim(s.height(), "CoeffMap"),
                    detail::checked_dim(s.width(), "CoeffMap")},
                   {}};
    r.values.reserve(s.size());
    for (double v : s.data()) r.values.push_back(detail::to_f32(v, "CoeffMap"));
    return r;
}

inline TensorRecord to_record(const Dictionary &d) {
    const auto k = detail::checked_dim(d.kernel(), "Dictionary");
    TensorRecord r{TensorTag::dictionary, {detail::checked_dim(d.atoms(), "Dictionary"), k, k}, {}};
    for (double v : d.data()) r.values.push_back(detail::to_f32(v, "Dictionary"));
    return r;
}

inline TensorRecord to_record(const TransferOp &op) {
    const auto k = op.atoms();
    if (static_cast<std::size_t>(op.mix.cols()) != k || static_cast<std::size_t>(op.bias.size()) != k)
        throw DimensionError("TransferOp: mix must be KxK and bias length K");
    TensorRecord r{TensorTag::transfer_op,
                   {detail::checked_dim(k, "TransferOp"), detail::checked_dim(k + 1, "TransferOp")},
                   {}};
    for (Eigen::Index i = 0; i < op.mix.rows(); ++i)
        for (Eigen::Index j = 0; j < op.mix.cols(); ++j)
            r.values.push_back(detail::to_f32(op.mix(i, j), "TransferOp"));
    for (Eigen::Index i = 0; i < op.bias.size(); ++i)
        r.values.push_back(detail::to_f32(op.bias(i), "TransferOp"));
    if (op.ridge < 0) throw ArgumentError("TransferOp: negative ridge");
    r.values.push_back(detail::to_f32(op.ridge, "TransferOp"));
    return r;
}

namespace detail {

inline void require_tag(const TensorRecord &r, TensorTag t) {
    if (r.tag != t)
        throw FormatError("type tag " + std::to_string(static_cast<int>(r.tag)) + " where " +
                              std::to_string(static_cast<int>(t)) + " was expected",
                          6);
}

inline std::vector<double> widen(const std::vector<float> &v, std::size_t n) {
    return std::vector<double>(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n));
}

} // namespace detail

template <class T> T from_record(const TensorRecord &r);

template <> inline Image from_record<Image>(const TensorRecord &r) {
    detail::require_tag(r, TensorTag::image);
    return Image(r.dims[0], r.dims[1], detail::widen(r.values, r.values.size()));
}

template <> inline CoeffMap from_record<CoeffMap>(const TensorRecord &r) {
    detail::require_tag(r, TensorTag::coeff_map);
    return CoeffMap(r.dims[0], r.dims[1], r.dims[2], detail::widen(r.values, r.values.size()));
}

template <> inline Dictionary from_record<Dictionary>(const TensorRecord &r) {
    detail::require_tag(r, TensorTag::dictionary);
    if (r.dims[1] != r.dims[2]) throw FormatError("dictionary atoms must be square", 8);
    return Dictionary(r.dims[0], r.dims[1], detail::widen(r.values, r.values.size()));
}

template <> inline TransferOp from_record<TransferOp>(const TensorRecord &r) {
    detail::require_tag(r, TensorTag::transfer_op);
    const auto k = static_cast<Eigen::Index>(r.dims[0]);
    if (r.dims[1] != r.dims[0] + 1) throw FormatError("transfer op dims must be [K, K+1]", 8);
    TransferOp op{Eigen::MatrixXd(k, k), Eigen::VectorXd(k), 0.0};
    std::size_t i = 0;
    for (Eigen::Index a = 0; a < k; ++a)
        for (Eigen::Index b = 0; b < k; ++b) op.mix(a, b) = r.values[i++];
    for (Eigen::Index a = 0; a < k; ++a) op.bias(a) = r.values[i++];
    op.ridge = r.values[i];
    return op;
}

// --- files ------------------------------------------------------------------

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::filesystem::path &path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

template <class T> void serialize_tensor(const T &obj, const std::filesystem::path &path) {
    write_file_bytes(path, encode_record(to_record(obj)));
}

template <class T> T deserialize_tensor(const std::filesystem::path &path) {
    const auto bytes = read_file_bytes(path);
    std::size_t off = 0;
    auto rec = decode_record(bytes, off);
    if (off != bytes.size()) throw FormatError("trailing bytes after tensor", off);
    return from_record<T>(rec);
}

} // namespace cscf

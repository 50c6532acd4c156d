#include "export/exif.h"

#include "core/error.h"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <string_view>
#include <vector>

namespace trapkit::exporter {

namespace {

constexpr std::uint16_t kTagMake = 0x010F;
constexpr std::uint16_t kTagDateTime = 0x0132;
constexpr std::uint16_t kTagExifPointer = 0x8769;
constexpr std::uint16_t kTagGpsPointer = 0x8825;
constexpr std::uint16_t kTagDateTimeOriginal = 0x9003;

constexpr std::uint16_t kGpsVersion = 0;
constexpr std::uint16_t kGpsLatRef = 1;
constexpr std::uint16_t kGpsLat = 2;
constexpr std::uint16_t kGpsLonRef = 3;
constexpr std::uint16_t kGpsLon = 4;
constexpr std::uint16_t kGpsAltRef = 5;
constexpr std::uint16_t kGpsAlt = 6;

constexpr std::uint16_t kTypeByte = 1;
constexpr std::uint16_t kTypeAscii = 2;
constexpr std::uint16_t kTypeLong = 4;
constexpr std::uint16_t kTypeRational = 5;

constexpr std::uint32_t kMaxIfdEntries = 1024;
constexpr std::string_view kExifHeader{"Exif\0\0", 6};
constexpr std::string_view kXmpHeader{"http://ns.adobe.com/xap/1.0/\0", 29};
constexpr std::string_view kPngSignature{"\x89PNG\r\n\x1a\n", 8};

std::uint32_t type_size(std::uint16_t type) {
    switch (type) {
    case 1: case 2: case 6: case 7:
        return 1;
    case 3: case 8:
        return 2;
    case 4: case 9: case 11:
        return 4;
    case 5: case 10: case 12:
        return 8;
    default:
        return 0;
    }
}

std::uint16_t be16(const std::string& b, std::size_t off) {
    return static_cast<std::uint16_t>((static_cast<unsigned char>(b[off]) << 8) |
                                      static_cast<unsigned char>(b[off + 1]));
}

std::uint32_t be32(const std::string& b, std::size_t off) {
    return (static_cast<std::uint32_t>(be16(b, off)) << 16) | be16(b, off + 2);
}

void put_be32(std::string& b, std::size_t off, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        b[off + i] = static_cast<char>((v >> (24 - 8 * i)) & 0xFF);
    }
}

// A TIFF structure embedded in a larger buffer; all offsets are TIFF-relative.
class Tiff {
public:
    Tiff(std::string& bytes, std::size_t base, std::size_t size)
            : m_bytes(bytes), m_base(base), m_size(size) {
        if (size < 8) {
            return;
        }
        const char* p = bytes.data() + base;
        if (p[0] == 'I' && p[1] == 'I') {
            m_little = true;
        } else if (p[0] == 'M' && p[1] == 'M') {
            m_little = false;
        } else {
            return;
        }
        m_valid = u16(2) == 42;
    }

    bool valid() const { return m_valid; }
    bool in_range(std::size_t off, std::size_t len) const {
        return off <= m_size && len <= m_size - off;
    }

    std::uint16_t u16(std::size_t off) const {
        const auto* p = reinterpret_cast<const unsigned char*>(m_bytes.data() + m_base + off);
        return m_little ? static_cast<std::uint16_t>(p[0] | (p[1] << 8))
                        : static_cast<std::uint16_t>((p[0] << 8) | p[1]);
    }
    std::uint32_t u32(std::size_t off) const {
        const std::uint32_t a = u16(off), b = u16(off + 2);
        return m_little ? (a | (b << 16)) : ((a << 16) | b);
    }
    void set16(std::size_t off, std::uint16_t v) {
        char* p = m_bytes.data() + m_base + off;
        if (m_little) {
            p[0] = static_cast<char>(v & 0xFF), p[1] = static_cast<char>(v >> 8);
        } else {
            p[0] = static_cast<char>(v >> 8), p[1] = static_cast<char>(v & 0xFF);
        }
    }
    void set32(std::size_t off, std::uint32_t v) {
        if (m_little) {
            set16(off, static_cast<std::uint16_t>(v & 0xFFFF));
            set16(off + 2, static_cast<std::uint16_t>(v >> 16));
        } else {
            set16(off, static_cast<std::uint16_t>(v >> 16));
            set16(off + 2, static_cast<std::uint16_t>(v & 0xFFFF));
        }
    }
    void zero(std::size_t off, std::size_t len) {
        std::memset(m_bytes.data() + m_base + off, 0, len);
    }
    void move(std::size_t dst, std::size_t src, std::size_t len) {
        std::memmove(m_bytes.data() + m_base + dst, m_bytes.data() + m_base + src, len);
    }
    char at(std::size_t off) const { return m_bytes[m_base + off]; }
    void put(std::size_t off, char c) { m_bytes[m_base + off] = c; }

private:
    std::string& m_bytes;
    std::size_t m_base;
    std::size_t m_size;
    bool m_little = true;
    bool m_valid = false;
};

struct Entry {
    std::uint16_t tag;
    std::uint16_t type;
    std::uint32_t count;
    std::size_t entry_off;
    std::size_t value_off;
    std::size_t value_size;
};

struct Ifd {
    std::size_t offset = 0;
    std::vector<Entry> entries;
};

// Returns nullopt for IFDs that do not fit inside the TIFF block.
std::optional<Ifd> read_ifd(const Tiff& tiff, std::size_t offset) {
    if (offset == 0 || !tiff.in_range(offset, 2)) {
        return std::nullopt;
    }
    const std::uint32_t count = tiff.u16(offset);
    if (count > kMaxIfdEntries || !tiff.in_range(offset + 2, 12 * count + 4)) {
        return std::nullopt;
    }
    Ifd ifd;
    ifd.offset = offset;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::size_t e = offset + 2 + 12 * i;
        Entry entry{tiff.u16(e), tiff.u16(e + 2), tiff.u32(e + 4), e, 0, 0};
        const std::uint64_t size = static_cast<std::uint64_t>(type_size(entry.type)) * entry.count;
        entry.value_size = static_cast<std::size_t>(size);
        if (size <= 4) {
            entry.value_off = e + 8;
        } else {
            entry.value_off = tiff.u32(e + 8);
            if (!tiff.in_range(entry.value_off, entry.value_size)) {
                entry.value_size = 0;  // dangling; never read or written
            }
        }
        ifd.entries.push_back(entry);
    }
    return ifd;
}

const Entry* find_entry(const Ifd& ifd, std::uint16_t tag) {
    for (const auto& e : ifd.entries) {
        if (e.tag == tag) {
            return &e;
        }
    }
    return nullptr;
}

std::optional<Ifd> gps_ifd(const Tiff& tiff, const Ifd& ifd0) {
    const Entry* ptr = find_entry(ifd0, kTagGpsPointer);
    if (!ptr || ptr->type != kTypeLong) {
        return std::nullopt;
    }
    return read_ifd(tiff, tiff.u32(ptr->value_off));
}

// Removes entries failing `keep` from an IFD in place: survivors move to the front,
// the next-IFD pointer follows them and the freed tail is zeroed.
void compact_ifd(Tiff& tiff, Ifd& ifd, auto keep) {
    const std::size_t first = ifd.offset + 2;
    const std::size_t old_count = ifd.entries.size();
    const std::uint32_t next = tiff.u32(first + 12 * old_count);
    std::size_t kept = 0;
    for (const auto& entry : ifd.entries) {
        if (keep(entry)) {
            if (entry.entry_off != first + 12 * kept) {
                tiff.move(first + 12 * kept, entry.entry_off, 12);
            }
            ++kept;
        } else if (entry.value_size > 4) {
            tiff.zero(entry.value_off, entry.value_size);
        }
    }
    tiff.set32(first + 12 * kept, next);
    const std::size_t tail = first + 12 * kept + 4;
    tiff.zero(tail, (first + 12 * old_count + 4) - tail);
    tiff.set16(ifd.offset, static_cast<std::uint16_t>(kept));
}

double read_rational(const Tiff& tiff, std::size_t off) {
    const std::uint32_t num = tiff.u32(off), den = tiff.u32(off + 4);
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

std::optional<double> read_coordinate(const Tiff& tiff, const Ifd& gps, std::uint16_t value_tag,
                                      std::uint16_t ref_tag, char negative_ref) {
    const Entry* value = find_entry(gps, value_tag);
    const Entry* ref = find_entry(gps, ref_tag);
    if (!value || !ref || value->type != kTypeRational || value->count != 3 ||
        value->value_size != 24 || ref->type != kTypeAscii || ref->count < 1) {
        return std::nullopt;
    }
    const double deg = read_rational(tiff, value->value_off) +
                       read_rational(tiff, value->value_off + 8) / 60.0 +
                       read_rational(tiff, value->value_off + 16) / 3600.0;
    return tiff.at(ref->value_off) == negative_ref ? -deg : deg;
}

std::optional<Timestamp> read_datetime(const Tiff& tiff, const Entry* entry) {
    if (!entry || entry->type != kTypeAscii || entry->value_size < 19) {
        return std::nullopt;
    }
    std::string text(19, '\0');
    for (std::size_t i = 0; i < 19; ++i) {
        text[i] = tiff.at(entry->value_off + i);
    }
    try {
        return parse_timestamp(text);
    } catch (const Error&) {
        return std::nullopt;
    }
}

struct Block {
    std::size_t offset;  // payload start in the file
    std::size_t size;
    std::size_t chunk_start;  // PNG chunk header start, for the CRC
};

struct Layout {
    ImageFormat format = ImageFormat::other;
    std::vector<Block> exif;
    std::vector<Block> xmp;
    std::size_t insert_at = 0;  // where a new EXIF block goes
};

Layout parse_layout(const std::string& b) {
    Layout layout;
    layout.format = detect_format(b);
    if (layout.format == ImageFormat::jpeg) {
        layout.insert_at = 2;
        std::size_t pos = 2;
        while (pos + 4 <= b.size()) {
            if (static_cast<unsigned char>(b[pos]) != 0xFF) {
                break;
            }
            const auto marker = static_cast<unsigned char>(b[pos + 1]);
            if (marker == 0xFF) {
                ++pos;
                continue;
            }
            if (marker == 0xDA || marker == 0xD9) {
                break;
            }
            if (marker == 0x01 || (marker >= 0xD0 && marker <= 0xD7)) {
                pos += 2;
                continue;
            }
            const std::size_t len = be16(b, pos + 2);
            if (len < 2 || pos + 2 + len > b.size()) {
                break;
            }
            const std::string_view data(b.data() + pos + 4, len - 2);
            if (marker == 0xE1 && data.starts_with(kExifHeader)) {
                layout.exif.push_back({pos + 4 + kExifHeader.size(), len - 2 - kExifHeader.size(), pos});
            } else if (marker == 0xE1 && data.starts_with(kXmpHeader)) {
                layout.xmp.push_back({pos + 4, len - 2, pos});
            }
            pos += 2 + len;
        }
    } else if (layout.format == ImageFormat::png) {
        std::size_t pos = kPngSignature.size();
        while (pos + 12 <= b.size()) {
            const std::size_t len = be32(b, pos);
            if (len > b.size() - pos - 12) {
                break;
            }
            const std::string_view type(b.data() + pos + 4, 4);
            const std::string_view data(b.data() + pos + 8, len);
            if (type == "eXIf") {
                layout.exif.push_back({pos + 8, len, pos});
            } else if (type == "iTXt" && data.starts_with(std::string_view("XML:com.adobe.xmp\0", 18))) {
                layout.xmp.push_back({pos + 8, len, pos});
            } else if (type == "IDAT" && layout.insert_at == 0) {
                layout.insert_at = pos;
            } else if (type == "IEND") {
                if (layout.insert_at == 0) {
                    layout.insert_at = pos;
                }
                break;
            }
            pos += 12 + len;
        }
    }
    return layout;
}

void update_png_crc(std::string& b, const Block& block) {
    uLong crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(b.data() + block.chunk_start + 4),
                static_cast<uInt>(block.size + 4));
    put_be32(b, block.chunk_start + 8 + block.size, static_cast<std::uint32_t>(crc));
}

std::size_t count_xmp_gps(const std::string& b, const Block& block) {
    const std::string_view data(b.data() + block.offset, block.size);
    std::size_t count = 0;
    for (std::string_view key : {"GPSLatitude", "GPSLongitude", "GPSAltitude"}) {
        for (auto pos = data.find(key); pos != std::string_view::npos; pos = data.find(key, pos + 1)) {
            ++count;
        }
    }
    return count;
}

// Removes XMP packets mentioning GPS properties. Returns the GPS mentions removed.
std::size_t drop_gps_xmp(std::string& b) {
    std::size_t removed = 0;
    for (;;) {
        const Layout layout = parse_layout(b);
        const auto it = std::find_if(layout.xmp.begin(), layout.xmp.end(),
                                     [&](const Block& x) { return count_xmp_gps(b, x) > 0; });
        if (it == layout.xmp.end()) {
            return removed;
        }
        removed += count_xmp_gps(b, *it);
        const std::size_t end = layout.format == ImageFormat::png ? it->offset + it->size + 4
                                                                  : it->offset + it->size;
        b.erase(it->chunk_start, end - it->chunk_start);
    }
}

template <typename Fn>
void for_each_tiff(std::string& b, Fn&& fn) {
    const Layout layout = parse_layout(b);
    for (const auto& block : layout.exif) {
        Tiff tiff(b, block.offset, block.size);
        if (!tiff.valid()) {
            continue;
        }
        if (fn(tiff) && layout.format == ImageFormat::png) {
            update_png_crc(b, block);
        }
    }
}

class TiffWriter {
public:
    void u8(std::uint8_t v) { m_out.push_back(static_cast<char>(v)); }
    void u16(std::uint16_t v) { u8(v & 0xFF), u8(v >> 8); }
    void u32(std::uint32_t v) { u16(v & 0xFFFF), u16(v >> 16); }
    std::size_t size() const { return m_out.size(); }
    void patch32(std::size_t off, std::uint32_t v) {
        for (int i = 0; i < 4; ++i) {
            m_out[off + i] = static_cast<char>((v >> (8 * i)) & 0xFF);
        }
    }
    void bytes(std::string_view s) { m_out.append(s); }
    std::string take() { return std::move(m_out); }

private:
    std::string m_out;
};

struct OutEntry {
    std::uint16_t tag;
    std::uint16_t type;
    std::uint32_t count;
    std::string data;  // raw little-endian value bytes
};

std::string rational_bytes(const std::vector<std::pair<std::uint32_t, std::uint32_t>>& values) {
    TiffWriter w;
    for (auto [num, den] : values) {
        w.u32(num), w.u32(den);
    }
    return w.take();
}

// Best continued-fraction approximation with 32-bit terms, so grid multiples such as
// k/10 are stored exactly.
std::pair<std::uint32_t, std::uint32_t> to_rational(double value) {
    constexpr double kMax = 4294967295.0;
    double p0 = 0, q0 = 1, p1 = 1, q1 = 0;
    double x = value;
    std::pair<std::uint32_t, std::uint32_t> best{static_cast<std::uint32_t>(std::llround(value)), 1};
    for (int i = 0; i < 64; ++i) {
        const double a = std::floor(x);
        const double p2 = a * p1 + p0, q2 = a * q1 + q0;
        if (p2 > kMax || q2 > kMax) {
            break;
        }
        best = {static_cast<std::uint32_t>(p2), static_cast<std::uint32_t>(q2)};
        if (std::abs(p2 / q2 - value) <= 1e-15 * std::max(1.0, value) || x - a < 1e-12) {
            break;
        }
        x = 1.0 / (x - a);
        p0 = p1, q0 = q1, p1 = p2, q1 = q2;
    }
    return best;
}

std::vector<std::pair<std::uint32_t, std::uint32_t>> to_dms(double value) {
    double v = std::abs(value);
    auto deg = static_cast<std::uint32_t>(std::floor(v));
    const double minutes = (v - deg) * 60.0;
    auto min = static_cast<std::uint32_t>(std::floor(minutes));
    auto sec = static_cast<std::uint32_t>(std::llround((minutes - min) * 60.0 * 10000.0));
    if (sec >= 600000) {
        sec -= 600000, ++min;
    }
    if (min >= 60) {
        min -= 60, ++deg;
    }
    return {{deg, 1}, {min, 1}, {sec, 10000}};
}

// Writes an IFD at the current position with out-of-line data after it.
void write_ifd(TiffWriter& w, std::vector<OutEntry> entries) {
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.tag < b.tag; });
    const std::size_t start = w.size();
    std::size_t data_off = start + 2 + 12 * entries.size() + 4;
    std::string data;
    w.u16(static_cast<std::uint16_t>(entries.size()));
    for (const auto& e : entries) {
        w.u16(e.tag), w.u16(e.type), w.u32(e.count);
        if (e.data.size() <= 4) {
            std::string inline_value = e.data;
            inline_value.resize(4, '\0');
            w.bytes(inline_value);
        } else {
            w.u32(static_cast<std::uint32_t>(data_off + data.size()));
            data += e.data;
            if (data.size() % 2) {
                data.push_back('\0');
            }
        }
    }
    w.u32(0);
    w.bytes(data);
}

std::string build_tiff(const GeoPoint& position, std::optional<Timestamp> capture_time) {
    std::vector<OutEntry> ifd0;
    ifd0.push_back({kTagMake, kTypeAscii, 8, std::string("trapkit\0", 8)});
    if (capture_time) {
        std::string text = format_timestamp(*capture_time);
        text[4] = ':', text[7] = ':', text[10] = ' ';
        text.push_back('\0');
        ifd0.push_back({kTagDateTime, kTypeAscii, 20, text});
    }
    ifd0.push_back({kTagGpsPointer, kTypeLong, 1, std::string(4, '\0')});

    TiffWriter w;
    w.bytes("II");
    w.u16(42);
    w.u32(8);
    write_ifd(w, ifd0);
    const std::size_t gps_offset = w.size();

    // Patch the GPS pointer now that the GPS IFD offset is known.
    const std::size_t pointer_entry = 8 + 2 + 12 * (ifd0.size() - 1);
    w.patch32(pointer_entry + 8, static_cast<std::uint32_t>(gps_offset));

    std::vector<OutEntry> gps;
    gps.push_back({kGpsVersion, kTypeByte, 4, std::string("\x02\x03\x00\x00", 4)});
    gps.push_back({kGpsLatRef, kTypeAscii, 2, std::string(position.latitude() < 0 ? "S" : "N") + '\0'});
    gps.push_back({kGpsLat, kTypeRational, 3, rational_bytes(to_dms(position.latitude()))});
    gps.push_back({kGpsLonRef, kTypeAscii, 2, std::string(position.longitude() < 0 ? "W" : "E") + '\0'});
    gps.push_back({kGpsLon, kTypeRational, 3, rational_bytes(to_dms(position.longitude()))});
    gps.push_back({kGpsAltRef, kTypeByte, 1, std::string(1, '\0')});
    gps.push_back({kGpsAlt, kTypeRational, 1, rational_bytes({{12345, 10}})});
    write_ifd(w, gps);
    return w.take();
}

}  // namespace

ImageFormat detect_format(const std::string& bytes) {
    if (bytes.size() >= 4 && static_cast<unsigned char>(bytes[0]) == 0xFF &&
        static_cast<unsigned char>(bytes[1]) == 0xD8) {
        return ImageFormat::jpeg;
    }
    if (bytes.size() >= kPngSignature.size() && std::string_view(bytes).starts_with(kPngSignature)) {
        return ImageFormat::png;
    }
    return ImageFormat::other;
}

MetadataScan scan_metadata(const std::string& bytes) {
    MetadataScan scan;
    std::string copy = bytes;  // Tiff works on a mutable buffer
    const Layout layout = parse_layout(copy);
    for (const auto& block : layout.exif) {
        Tiff tiff(copy, block.offset, block.size);
        if (!tiff.valid()) {
            continue;
        }
        scan.has_exif = true;
        const auto ifd0 = read_ifd(tiff, tiff.u32(4));
        if (!ifd0) {
            continue;
        }
        if (!scan.capture_time) {
            if (const Entry* exif_ptr = find_entry(*ifd0, kTagExifPointer);
                exif_ptr && exif_ptr->type == kTypeLong) {
                if (const auto sub = read_ifd(tiff, tiff.u32(exif_ptr->value_off))) {
                    scan.capture_time = read_datetime(tiff, find_entry(*sub, kTagDateTimeOriginal));
                }
            }
        }
        if (!scan.capture_time) {
            scan.capture_time = read_datetime(tiff, find_entry(*ifd0, kTagDateTime));
        }
        if (const auto gps = gps_ifd(tiff, *ifd0)) {
            scan.gps_tag_count += gps->entries.size();
            const auto lat = read_coordinate(tiff, *gps, kGpsLat, kGpsLatRef, 'S');
            const auto lon = read_coordinate(tiff, *gps, kGpsLon, kGpsLonRef, 'W');
            if (lat && lon && std::abs(*lat) <= 90.0 && std::abs(*lon) <= 180.0) {
                scan.gps = GeoPoint(*lat, *lon);
            }
        }
    }
    for (const auto& block : layout.xmp) {
        scan.gps_tag_count += count_xmp_gps(copy, block);
    }
    return scan;
}

std::string embed_gps(const std::string& bytes, const GeoPoint& position,
                      std::optional<Timestamp> capture_time) {
    std::string out = bytes;
    const std::string tiff = build_tiff(position, capture_time);
    const ImageFormat format = detect_format(out);
    if (format == ImageFormat::other) {
        throw Error(ErrorCode::InvalidArgument, "EXIF embedding supports JPEG and PNG only");
    }
    // Drop existing EXIF blocks, last first so earlier offsets stay valid.
    Layout layout = parse_layout(out);
    for (auto it = layout.exif.rbegin(); it != layout.exif.rend(); ++it) {
        const std::size_t end = it->offset + it->size + (format == ImageFormat::png ? 4 : 0);
        out.erase(it->chunk_start, end - it->chunk_start);
    }
    layout = parse_layout(out);
    std::string block;
    if (format == ImageFormat::jpeg) {
        const std::size_t len = 2 + kExifHeader.size() + tiff.size();
        if (len > 0xFFFF) {
            throw Error(ErrorCode::InvalidArgument, "EXIF block too large");
        }
        block = std::string("\xFF\xE1", 2);
        block.push_back(static_cast<char>(len >> 8));
        block.push_back(static_cast<char>(len & 0xFF));
        block.append(kExifHeader);
        block.append(tiff);
    } else {
        block.resize(8);
        put_be32(block, 0, static_cast<std::uint32_t>(tiff.size()));
        block.replace(4, 4, "eXIf");
        block.append(tiff);
        block.append(4, '\0');
        uLong crc = crc32(0L, Z_NULL, 0);
        crc = crc32(crc, reinterpret_cast<const Bytef*>(block.data() + 4),
                    static_cast<uInt>(tiff.size() + 4));
        put_be32(block, 8 + tiff.size(), static_cast<std::uint32_t>(crc));
    }
    out.insert(layout.insert_at, block);
    return out;
}

std::size_t strip_gps(std::string& bytes) {
    std::size_t removed = 0;
    for_each_tiff(bytes, [&](Tiff& tiff) {
        auto ifd0 = read_ifd(tiff, tiff.u32(4));
        if (!ifd0 || !find_entry(*ifd0, kTagGpsPointer)) {
            return false;
        }
        if (auto gps = gps_ifd(tiff, *ifd0)) {
            removed += gps->entries.size();
            for (const auto& entry : gps->entries) {
                if (entry.value_size > 4) {
                    tiff.zero(entry.value_off, entry.value_size);
                }
            }
            tiff.zero(gps->offset, 2 + 12 * gps->entries.size() + 4);
        }
        compact_ifd(tiff, *ifd0, [](const Entry& e) { return e.tag != kTagGpsPointer; });
        return true;
    });
    removed += drop_gps_xmp(bytes);
    return removed;
}

bool replace_gps(std::string& bytes, const GeoPoint& position) {
    bool replaced = false;
    for_each_tiff(bytes, [&](Tiff& tiff) {
        auto ifd0 = read_ifd(tiff, tiff.u32(4));
        if (!ifd0) {
            return false;
        }
        auto gps = gps_ifd(tiff, *ifd0);
        if (!gps || !read_coordinate(tiff, *gps, kGpsLat, kGpsLatRef, 'S') ||
            !read_coordinate(tiff, *gps, kGpsLon, kGpsLonRef, 'W')) {
            return false;
        }
        auto write_coord = [&](std::uint16_t value_tag, std::uint16_t ref_tag, double value,
                               char pos_ref, char neg_ref) {
            const Entry* v = find_entry(*gps, value_tag);
            const Entry* r = find_entry(*gps, ref_tag);
            const auto [num, den] = to_rational(std::abs(value));
            tiff.set32(v->value_off, num);
            tiff.set32(v->value_off + 4, den);
            for (std::size_t k = 1; k < 3; ++k) {
                tiff.set32(v->value_off + 8 * k, 0);
                tiff.set32(v->value_off + 8 * k + 4, 1);
            }
            tiff.put(r->value_off, value < 0 ? neg_ref : pos_ref);
        };
        write_coord(kGpsLat, kGpsLatRef, position.latitude(), 'N', 'S');
        write_coord(kGpsLon, kGpsLonRef, position.longitude(), 'E', 'W');
        compact_ifd(tiff, *gps, [](const Entry& e) { return e.tag <= kGpsLon; });
        replaced = true;
        return true;
    });
    drop_gps_xmp(bytes);
    return replaced;
}

}  // namespace trapkit::exporter

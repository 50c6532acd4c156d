#include "datakit/archive.h"

#include "core/error.h"
#include "core/image.h"

#include <fmt/format.h>
#include <zlib.h>

#include <algorithm>
#include <cstring>
#include <vector>

namespace trapkit::datakit {

namespace {

constexpr std::size_t kBlock = 512;

std::string field(const char* p, std::size_t len) {
    std::size_t n = 0;
    while (n < len && p[n] != '\0') {
        ++n;
    }
    return std::string(p, n);
}

std::uint64_t parse_octal(const char* p, std::size_t len) {
    // GNU base-256 encoding for large sizes.
    if (static_cast<unsigned char>(p[0]) & 0x80) {
        std::uint64_t v = static_cast<unsigned char>(p[0]) & 0x7F;
        for (std::size_t i = 1; i < len; ++i) {
            v = (v << 8) | static_cast<unsigned char>(p[i]);
        }
        return v;
    }
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < len && p[i] != '\0' && p[i] != ' '; ++i) {
        if (p[i] < '0' || p[i] > '7') {
            throw Error(ErrorCode::ParseError, "bad octal field in tar header");
        }
        v = v * 8 + static_cast<std::uint64_t>(p[i] - '0');
    }
    return v;
}

std::filesystem::path safe_relative(const std::string& name) {
    const std::filesystem::path p(name);
    if (p.is_absolute()) {
        throw Error(ErrorCode::ParseError, fmt::format("tar entry '{}' is absolute", name));
    }
    std::filesystem::path out;
    for (const auto& part : p) {
        if (part == "..") {
            throw Error(ErrorCode::ParseError, fmt::format("tar entry '{}' leaves the archive root", name));
        }
        if (part != "." && !part.empty()) {
            out /= part;
        }
    }
    return out;
}

// "len key=value\n" records of a pax extended header.
std::string pax_path(const std::string& data) {
    std::size_t pos = 0;
    std::string path;
    while (pos < data.size()) {
        const auto space = data.find(' ', pos);
        if (space == std::string::npos) {
            break;
        }
        const std::size_t len = std::stoul(data.substr(pos, space - pos));
        if (len == 0 || pos + len > data.size()) {
            break;
        }
        const std::string record = data.substr(space + 1, len - (space - pos) - 2);
        if (record.rfind("path=", 0) == 0) {
            path = record.substr(5);
        }
        pos += len;
    }
    return path;
}

void write_octal(char* p, std::size_t len, std::uint64_t v) {
    std::string s = fmt::format("{:0{}o}", v, len - 1);
    std::memcpy(p, s.data(), len - 1);
    p[len - 1] = '\0';
}

}  // namespace

ArchiveKind archive_kind(const std::filesystem::path& name) {
    const std::string s = name.filename().string();
    auto ends_with = [&](std::string_view suffix) {
        return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    if (ends_with(".tar.gz") || ends_with(".tgz")) {
        return ArchiveKind::tar_gz;
    }
    if (ends_with(".tar")) {
        return ArchiveKind::tar;
    }
    return ArchiveKind::plain;
}

std::string gunzip(const std::string& data) {
    std::string out;
    z_stream zs{};
    if (inflateInit2(&zs, 15 + 32) != Z_OK) {
        throw Error(ErrorCode::ParseError, "cannot initialise inflate");
    }
    zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(data.data()));
    zs.avail_in = static_cast<uInt>(data.size());
    std::vector<char> buffer(1 << 16);
    int rc = Z_OK;
    while (true) {
        zs.next_out = reinterpret_cast<Bytef*>(buffer.data());
        zs.avail_out = static_cast<uInt>(buffer.size());
        rc = inflate(&zs, Z_NO_FLUSH);
        out.append(buffer.data(), buffer.size() - zs.avail_out);
        if (rc == Z_STREAM_END) {
            if (zs.avail_in == 0) {
                break;
            }
            inflateReset(&zs);  // next gzip member
            continue;
        }
        if (rc != Z_OK) {
            inflateEnd(&zs);
            throw Error(ErrorCode::ParseError, fmt::format("corrupt gzip data (zlib {})", rc));
        }
        if (zs.avail_in == 0 && zs.avail_out != 0) {
            inflateEnd(&zs);
            throw Error(ErrorCode::ParseError, "truncated gzip data");
        }
    }
    inflateEnd(&zs);
    return out;
}

std::string gzip(const std::string& data) {
    z_stream zs{};
    if (deflateInit2(&zs, Z_DEFAULT_COMPRESSION, Z_DEFLATED, 15 + 16, 8, Z_DEFAULT_STRATEGY) != Z_OK) {
        throw Error(ErrorCode::IoError, "cannot initialise deflate");
    }
    std::string out(deflateBound(&zs, static_cast<uLong>(data.size())) + 32, '\0');
    zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(data.data()));
    zs.avail_in = static_cast<uInt>(data.size());
    zs.next_out = reinterpret_cast<Bytef*>(out.data());
    zs.avail_out = static_cast<uInt>(out.size());
    const int rc = deflate(&zs, Z_FINISH);
    out.resize(zs.total_out);
    deflateEnd(&zs);
    if (rc != Z_STREAM_END) {
        throw Error(ErrorCode::IoError, "gzip compression failed");
    }
    return out;
}

std::size_t extract_tar(const std::string& tar, const std::filesystem::path& dest) {
    std::size_t pos = 0;
    std::size_t files = 0;
    std::string long_name;
    while (pos + kBlock <= tar.size()) {
        const char* h = tar.data() + pos;
        if (std::all_of(h, h + kBlock, [](char c) { return c == '\0'; })) {
            break;
        }
        const std::uint64_t size = parse_octal(h + 124, 12);
        const char type = h[156];
        const std::size_t data_pos = pos + kBlock;
        if (data_pos + size > tar.size()) {
            throw Error(ErrorCode::ParseError, "tar entry runs past the end of the archive");
        }
        const std::string data = tar.substr(data_pos, size);
        pos = data_pos + (size + kBlock - 1) / kBlock * kBlock;

        if (type == 'L') {
            long_name = field(data.data(), data.size());
            continue;
        }
        if (type == 'x') {
            long_name = pax_path(data);
            continue;
        }
        if (type == 'g') {
            continue;
        }
        std::string name = field(h, 100);
        const std::string prefix = field(h + 345, 155);
        if (std::memcmp(h + 257, "ustar", 5) == 0 && !prefix.empty()) {
            name = prefix + "/" + name;
        }
        if (!long_name.empty()) {
            name = std::move(long_name);
            long_name.clear();
        }
        const auto rel = safe_relative(name);
        if (rel.empty()) {
            continue;
        }
        if (type == '5') {
            std::filesystem::create_directories(dest / rel);
        } else if (type == '0' || type == '\0' || type == '7') {
            write_file(dest / rel, data);
            ++files;
        }
        // Links, devices and FIFOs are skipped.
    }
    return files;
}

std::size_t unpack(const std::filesystem::path& archive, const std::filesystem::path& dest) {
    std::filesystem::create_directories(dest);
    switch (archive_kind(archive)) {
    case ArchiveKind::tar:
        return extract_tar(read_file(archive), dest);
    case ArchiveKind::tar_gz:
        return extract_tar(gunzip(read_file(archive)), dest);
    case ArchiveKind::plain:
        write_file(dest / archive.filename(), read_file(archive));
        return 1;
    }
    return 0;
}

std::string make_tar(const std::vector<std::pair<std::string, std::string>>& files) {
    std::string out;
    for (const auto& [name, contents] : files) {
        // ustar splits long paths at a '/' into prefix (155) and name (100).
        std::string prefix;
        std::string base = name;
        if (base.size() > 100) {
            const auto cut = name.find('/', name.size() > 101 ? name.size() - 101 : 0);
            if (cut == std::string::npos || cut > 155 || cut == 0) {
                throw Error(ErrorCode::InvalidArgument, fmt::format("tar name '{}' too long", name));
            }
            prefix = name.substr(0, cut);
            base = name.substr(cut + 1);
        }
        char h[kBlock] = {};
        std::memcpy(h, base.data(), base.size());
        std::memcpy(h + 345, prefix.data(), prefix.size());
        write_octal(h + 100, 8, 0644);
        write_octal(h + 108, 8, 0);
        write_octal(h + 116, 8, 0);
        write_octal(h + 124, 12, contents.size());
        write_octal(h + 136, 12, 0);
        h[156] = '0';
        std::memcpy(h + 257, "ustar\0" "00", 8);
        std::memset(h + 148, ' ', 8);
        unsigned sum = 0;
        for (unsigned char c : h) {
            sum += c;
        }
        write_octal(h + 148, 7, sum);
        h[155] = ' ';
        out.append(h, kBlock);
        out += contents;
        out.append((kBlock - contents.size() % kBlock) % kBlock, '\0');
    }
    out.append(2 * kBlock, '\0');
    return out;
}

}  // namespace trapkit::datakit

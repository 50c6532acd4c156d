#include "datakit/catalog.h"

#include "core/checksum.h"
#include "core/error.h"
#include "core/image.h"
#include "datakit/archive.h"

#include <fmt/format.h>
#include <httplib.h>

#include <algorithm>
#include <atomic>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

namespace trapkit::datakit {

namespace {

constexpr const char* kCompleteMarker = ".complete";

bool is_sha256_hex(const std::string& s) {
    return s.size() == 64 && std::all_of(s.begin(), s.end(), [](char c) {
               return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
           });
}

std::string archive_name(const CatalogEntry& entry) {
    std::string path = parse_url(entry.download_url).path;
    path = path.substr(0, path.find('?'));
    const auto slash = path.rfind('/');
    std::string name = slash == std::string::npos ? path : path.substr(slash + 1);
    return name.empty() || name == "." || name == ".." ? entry.dataset_id + ".bin" : name;
}

std::size_t count_files(const std::filesystem::path& dir) {
    std::size_t n = 0;
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
        n += e.is_regular_file();
    }
    return n;
}

std::unique_ptr<httplib::Client> make_client(const Url& url, const FetchOptions& options) {
    auto client = std::make_unique<httplib::Client>(url.origin());
    client->set_connection_timeout(options.timeout_s, 0);
    client->set_read_timeout(options.timeout_s, 0);
    client->set_follow_location(true);
    return client;
}

[[noreturn]] void network_error(const std::string& what) {
    throw Error(ErrorCode::NetworkError, what);
}

struct ChunkState {
    std::string url;
    std::uint64_t size = 0;
    std::size_t chunk_size = 0;
    std::string checksum;
    std::set<std::size_t> done;
};

void save_state(const std::filesystem::path& path, const ChunkState& state) {
    nlohmann::ordered_json doc;
    doc["url"] = state.url;
    doc["size"] = state.size;
    doc["chunk_size"] = state.chunk_size;
    doc["checksum"] = state.checksum;
    doc["done"] = state.done;
    const auto tmp = path.string() + ".tmp";
    write_file(tmp, doc.dump() + "\n");
    std::filesystem::rename(tmp, path);
}

// Resumable only when the saved state describes the same download.
ChunkState load_state(const std::filesystem::path& state_path, const std::filesystem::path& part_path,
                      const ChunkState& wanted) {
    std::error_code ec;
    if (!std::filesystem::exists(state_path, ec) || !std::filesystem::exists(part_path, ec) ||
        std::filesystem::file_size(part_path, ec) != wanted.size) {
        return wanted;
    }
    try {
        const auto doc = nlohmann::json::parse(read_file(state_path));
        if (doc.at("url") != wanted.url || doc.at("size") != wanted.size ||
            doc.at("chunk_size") != wanted.chunk_size || doc.at("checksum") != wanted.checksum) {
            return wanted;
        }
        ChunkState state = wanted;
        state.done = doc.at("done").get<std::set<std::size_t>>();
        return state;
    } catch (const std::exception&) {
        return wanted;
    }
}

// Ranged, concurrent download into a pre-sized part file.
void download_chunked(const Url& url, const std::string& raw_url, std::uint64_t size, const CatalogEntry& entry,
                      const std::filesystem::path& part, const std::filesystem::path& state_path,
                      const FetchOptions& options) {
    ChunkState wanted{raw_url, size, options.chunk_size, entry.archive_checksum, {}};
    ChunkState state = load_state(state_path, part, wanted);
    if (state.done.empty()) {
        write_file(part, "");
        std::filesystem::resize_file(part, size);
    }
    save_state(state_path, state);

    const std::size_t chunks = static_cast<std::size_t>((size + options.chunk_size - 1) / options.chunk_size);
    std::vector<std::size_t> pending;
    for (std::size_t i = 0; i < chunks; ++i) {
        if (!state.done.contains(i)) {
            pending.push_back(i);
        }
    }
    std::mutex mutex;
    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> failures{0};
    std::string first_failure;

    auto worker = [&] {
        auto client = make_client(url, options);
        std::fstream out(part, std::ios::in | std::ios::out | std::ios::binary);
        for (std::size_t k = next++; k < pending.size(); k = next++) {
            const std::size_t index = pending[k];
            const std::uint64_t begin = static_cast<std::uint64_t>(index) * options.chunk_size;
            const std::uint64_t end = std::min<std::uint64_t>(size, begin + options.chunk_size);
            std::string error;
            bool ok = false;
            for (int attempt = 0; attempt < options.max_attempts && !ok; ++attempt) {
                const httplib::Headers headers{{"Range", fmt::format("bytes={}-{}", begin, end - 1)}};
                auto res = client->Get(url.path, headers);
                if (!res) {
                    error = httplib::to_string(res.error());
                } else if (res->status != 206 || res->body.size() != end - begin) {
                    error = fmt::format("HTTP {} with {} bytes for range {}-{}", res->status, res->body.size(),
                                        begin, end - 1);
                } else {
                    out.seekp(static_cast<std::streamoff>(begin));
                    out.write(res->body.data(), static_cast<std::streamsize>(res->body.size()));
                    out.flush();
                    ok = static_cast<bool>(out);
                    if (!ok) {
                        error = "write to part file failed";
                        out.clear();
                    }
                }
            }
            std::lock_guard lock(mutex);
            if (ok) {
                state.done.insert(index);
                save_state(state_path, state);
            } else if (failures++ == 0) {
                first_failure = fmt::format("chunk {}: {}", index, error);
            }
        }
    };
    const auto threads = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, options.connections)),
                                               std::max<std::size_t>(1, pending.size()));
    {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < threads; ++t) {
            pool.emplace_back(worker);
        }
    }
    if (failures > 0) {
        network_error(fmt::format("{} of {} chunks of '{}' failed ({}); run again to resume", failures.load(),
                                  chunks, raw_url, first_failure));
    }
}

// Whole-body download for servers without range support.
void download_whole(const Url& url, const std::string& raw_url, const std::filesystem::path& part,
                    const FetchOptions& options) {
    auto client = make_client(url, options);
    std::ofstream out(part, std::ios::binary | std::ios::trunc);
    int status = 0;
    auto res = client->Get(
            url.path,
            [&](const httplib::Response& response) {
                status = response.status;
                return response.status == 200;
            },
            [&](const char* data, std::size_t len) {
                out.write(data, static_cast<std::streamsize>(len));
                return static_cast<bool>(out);
            });
    if (!res || status != 200) {
        network_error(fmt::format("download of '{}' failed: {}", raw_url,
                                  res ? fmt::format("HTTP {}", status) : httplib::to_string(res.error())));
    }
}

}  // namespace

void CatalogEntry::validate() const {
    if (dataset_id.empty()) {
        throw Error(ErrorCode::InvalidArgument, "catalog entry without dataset_id");
    }
    if (!is_sha256_hex(archive_checksum)) {
        throw Error(ErrorCode::InvalidArgument,
                    fmt::format("dataset '{}' lacks a SHA-256 archive checksum", dataset_id));
    }
    parse_url(download_url);
}

std::string Url::origin() const {
    return fmt::format("{}://{}:{}", scheme, host, port);
}

Url parse_url(const std::string& text) {
    const auto sep = text.find("://");
    if (sep == std::string::npos) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("malformed URL '{}'", text));
    }
    Url url;
    url.scheme = text.substr(0, sep);
    if (url.scheme != "http" && url.scheme != "https") {
        throw Error(ErrorCode::InvalidArgument, fmt::format("unsupported URL scheme in '{}'", text));
    }
    const auto rest = text.substr(sep + 3);
    const auto slash = rest.find('/');
    std::string authority = rest.substr(0, slash);
    url.path = slash == std::string::npos ? "/" : rest.substr(slash);
    url.port = url.scheme == "https" ? 443 : 80;
    if (const auto colon = authority.rfind(':'); colon != std::string::npos && authority.find(']') == std::string::npos) {
        const std::string port = authority.substr(colon + 1);
        if (port.empty() || !std::all_of(port.begin(), port.end(), ::isdigit) || port.size() > 5) {
            throw Error(ErrorCode::InvalidArgument, fmt::format("bad port in URL '{}'", text));
        }
        url.port = std::stoi(port);
        authority = authority.substr(0, colon);
    }
    if (authority.empty() || authority.find_first_of(" @") != std::string::npos) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("malformed host in URL '{}'", text));
    }
    url.host = authority;
    return url;
}

CatalogEntry catalog_entry_from_json(const nlohmann::json& doc) {
    CatalogEntry entry;
    try {
        entry.dataset_id = doc.at("dataset_id").get<std::string>();
        entry.download_url = doc.at("download_url").get<std::string>();
        entry.archive_checksum = doc.value("archive_checksum", "");
        entry.license = doc.value("license", "");
        entry.record_count = doc.value("record_count", std::int64_t{0});
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, fmt::format("bad catalog entry: {}", e.what()));
    }
    entry.validate();
    return entry;
}

nlohmann::ordered_json catalog_entry_to_json(const CatalogEntry& entry) {
    nlohmann::ordered_json doc;
    doc["dataset_id"] = entry.dataset_id;
    doc["download_url"] = entry.download_url;
    doc["archive_checksum"] = entry.archive_checksum;
    doc["license"] = entry.license;
    doc["record_count"] = entry.record_count;
    return doc;
}

std::vector<CatalogEntry> load_catalog(const std::filesystem::path& path) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, fmt::format("bad catalog '{}': {}", path.string(), e.what()));
    }
    std::vector<CatalogEntry> entries;
    if (!doc.contains("datasets") || !doc["datasets"].is_array()) {
        throw Error(ErrorCode::ParseError, fmt::format("catalog '{}' has no datasets list", path.string()));
    }
    for (const auto& item : doc["datasets"]) {
        entries.push_back(catalog_entry_from_json(item));
    }
    return entries;
}

const CatalogEntry& find_dataset(const std::vector<CatalogEntry>& catalog, const std::string& dataset_id) {
    for (const auto& entry : catalog) {
        if (entry.dataset_id == dataset_id) {
            return entry;
        }
    }
    throw Error(ErrorCode::InvalidArgument, fmt::format("dataset '{}' is not in the catalog", dataset_id));
}

DatasetHandle fetch_dataset(const CatalogEntry& entry, const std::filesystem::path& dest_dir,
                            const FetchOptions& options) {
    entry.validate();
    if (options.chunk_size == 0) {
        throw Error(ErrorCode::InvalidArgument, "chunk size must be positive");
    }
    const auto dir = dest_dir / entry.dataset_id;
    DatasetHandle handle;
    handle.dataset_id = entry.dataset_id;
    handle.archive = dir / archive_name(entry);
    handle.root = dir / "data";
    const auto marker = dir / kCompleteMarker;

    std::error_code ec;
    if (std::filesystem::exists(marker, ec) && std::filesystem::is_directory(handle.root, ec) &&
        read_file(marker) == entry.archive_checksum + "\n") {
        handle.file_count = count_files(handle.root);
        return handle;
    }
    std::filesystem::create_directories(dir, ec);

    if (!std::filesystem::exists(handle.archive, ec)) {
        const Url url = parse_url(entry.download_url);
        const auto part = std::filesystem::path(handle.archive.string() + ".part");
        const auto state = std::filesystem::path(part.string() + ".state.json");

        auto client = make_client(url, options);
        auto head = client->Head(url.path);
        if (!head) {
            network_error(fmt::format("cannot reach '{}': {}", entry.download_url, httplib::to_string(head.error())));
        }
        if (head->status != 200) {
            network_error(fmt::format("'{}' answered HTTP {}", entry.download_url, head->status));
        }
        const bool ranges = head->get_header_value("Accept-Ranges") == "bytes" && head->has_header("Content-Length");
        if (ranges) {
            const auto size = std::stoull(head->get_header_value("Content-Length"));
            download_chunked(url, entry.download_url, size, entry, part, state, options);
        } else {
            download_whole(url, entry.download_url, part, options);
        }
        handle.downloaded = true;
        if (sha256_file(part) != entry.archive_checksum) {
            std::filesystem::remove(part, ec);
            std::filesystem::remove(state, ec);
            throw Error(ErrorCode::ChecksumMismatch,
                        fmt::format("download of '{}' does not match its catalog checksum", entry.dataset_id));
        }
        std::filesystem::rename(part, handle.archive);
        std::filesystem::remove(state, ec);
    } else if (sha256_file(handle.archive) != entry.archive_checksum) {
        throw Error(ErrorCode::ChecksumMismatch,
                    fmt::format("cached archive '{}' does not match its catalog checksum", handle.archive.string()));
    }

    // Unpack beside the final location, then move into place.
    const auto staging = dir / "data.tmp";
    std::filesystem::remove_all(staging, ec);
    std::filesystem::remove_all(handle.root, ec);
    handle.file_count = unpack(handle.archive, staging);
    std::filesystem::rename(staging, handle.root);
    write_file(marker, entry.archive_checksum + "\n");
    return handle;
}

}  // namespace trapkit::datakit

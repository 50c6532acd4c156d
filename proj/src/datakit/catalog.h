#pragma once

#include <json.hpp>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace trapkit::datakit {

struct CatalogEntry {
    std::string dataset_id;
    std::string download_url;
    std::string archive_checksum;  // lowercase hex SHA-256
    std::string license;
    std::int64_t record_count = 0;

    // Throws InvalidArgument for a missing checksum or a malformed URL.
    void validate() const;
};

CatalogEntry catalog_entry_from_json(const nlohmann::json& doc);
nlohmann::ordered_json catalog_entry_to_json(const CatalogEntry& entry);

// Catalog index: {"datasets": [entry, ...]}. Throws ParseError or InvalidArgument.
std::vector<CatalogEntry> load_catalog(const std::filesystem::path& path);
const CatalogEntry& find_dataset(const std::vector<CatalogEntry>& catalog, const std::string& dataset_id);

struct Url {
    std::string scheme;
    std::string host;
    int port = 0;
    std::string path;  // includes the query

    std::string origin() const;
};

// http and https only. Throws InvalidArgument.
Url parse_url(const std::string& url);

struct FetchOptions {
    std::size_t chunk_size = 4 << 20;
    int connections = 4;
    int max_attempts = 3;
    int timeout_s = 30;
};

struct DatasetHandle {
    std::string dataset_id;
    std::filesystem::path root;      // unpacked contents
    std::filesystem::path archive;   // verified archive
    std::size_t file_count = 0;
    bool downloaded = false;         // false when served from the local cache
};

// Layout under dest_dir/<dataset_id>/: the archive, "<archive>.part" plus
// "<archive>.part.state.json" while downloading, "data/" once unpacked and a
// ".complete" marker holding the checksum. A finished fetch is a no-op; an interrupted
// one resumes with the chunks it still lacks. Errors: ChecksumMismatch (nothing is
// unpacked), NetworkError, IoError.
DatasetHandle fetch_dataset(const CatalogEntry& entry, const std::filesystem::path& dest_dir,
                            const FetchOptions& options = {});

}  // namespace trapkit::datakit

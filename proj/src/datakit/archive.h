#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace trapkit::datakit {

enum class ArchiveKind { tar, tar_gz, plain };

// From the file name: .tar, .tar.gz / .tgz, anything else is a plain file.
ArchiveKind archive_kind(const std::filesystem::path& name);

// Decompresses gzip data (concatenated members allowed). Throws ParseError.
std::string gunzip(const std::string& data);

// Extracts regular files and directories of a POSIX/GNU tar stream into `dest`.
// Entries with absolute paths or ".." components are rejected with ParseError.
// Returns the number of regular files written.
std::size_t extract_tar(const std::string& tar, const std::filesystem::path& dest);

// Unpacks `archive` into `dest` according to archive_kind; plain files are copied.
std::size_t unpack(const std::filesystem::path& archive, const std::filesystem::path& dest);

// Test and packaging helper: a ustar archive of the given (name, contents) pairs.
std::string make_tar(const std::vector<std::pair<std::string, std::string>>& files);
std::string gzip(const std::string& data);

}  // namespace trapkit::datakit

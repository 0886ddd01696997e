#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "iimlp/errors.hpp"

namespace iimlp {

// Shortest decimal form that round-trips the double (printf %.17g trimmed via
// the round-trip check); keeps CSV output deterministic and exact.
std::string format_double(double v);

class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::string& header);
    void row(const std::vector<std::string>& cells);
    void flush();

private:
    std::string path_;
    std::string buffer_;
};

std::string read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::string& bytes);
std::uint64_t file_crc64(const std::string& path);
bool file_exists(const std::string& path);
void ensure_directory(const std::string& path);

}  // namespace iimlp

#include "iimlp/io.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "iimlp/network.hpp"  // crc64

namespace iimlp {

std::string format_double(double v) {
    char buf[40];
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
        double back = 0.0;
        std::sscanf(buf, "%lf", &back);
        if (back == v) return buf;
    }
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

CsvWriter::CsvWriter(const std::string& path, const std::string& header) : path_(path) {
    buffer_ = header;
    buffer_ += '\n';
}

void CsvWriter::row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) buffer_ += ',';
        buffer_ += cells[i];
    }
    buffer_ += '\n';
}

void CsvWriter::flush() { write_file_bytes(path_, buffer_); }

std::string read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DiagnosticError("cannot open " + path);
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DiagnosticError("cannot open " + path + " for writing");
    out.write(bytes.data(), std::streamsize(bytes.size()));
    if (!out) throw DiagnosticError("short write to " + path);
}

std::uint64_t file_crc64(const std::string& path) {
    std::string bytes = read_file_bytes(path);
    return crc64(bytes.data(), bytes.size());
}

bool file_exists(const std::string& path) {
    std::error_code ec;
    return std::filesystem::exists(path, ec);
}

void ensure_directory(const std::string& path) {
    std::error_code ec;
    std::filesystem::create_directories(path, ec);
    if (ec) throw DiagnosticError("cannot create directory " + path + ": " + ec.message());
}

}  // namespace iimlp

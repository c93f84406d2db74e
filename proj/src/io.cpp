#include "modsteer/io.hpp"

#include <array>
#include <bit>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <openssl/sha.h>

#include "modsteer/error.hpp"

namespace modsteer {

void write_u32_le(std::ostream & os, uint32_t v) {
    const std::array<char, 4> b = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                                   static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    os.write(b.data(), 4);
}

void write_f32_le(std::ostream & os, float v) {
    write_u32_le(os, std::bit_cast<uint32_t>(v));
}

uint32_t read_u32_le(std::istream & is) {
    std::array<unsigned char, 4> b{};
    if (!is.read(reinterpret_cast<char *>(b.data()), 4)) {
        throw ArtifactError("unexpected end of binary data");
    }
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) | (static_cast<uint32_t>(b[2]) << 16) |
           (static_cast<uint32_t>(b[3]) << 24);
}

float read_f32_le(std::istream & is) {
    return std::bit_cast<float>(read_u32_le(is));
}

std::string timestamp_utc() {
    std::time_t t = 0;
    if (const char * env = std::getenv("SOURCE_DATE_EPOCH"); env && *env) {
        t = static_cast<std::time_t>(std::strtoll(env, nullptr, 10));
    } else {
        t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    }
    std::tm tm{};
    gmtime_r(&t, &tm);
    return fmt::format("{:04}-{:02}-{:02}T{:02}:{:02}:{:02}Z", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday, tm.tm_hour,
                       tm.tm_min, tm.tm_sec);
}

std::string read_file(const std::filesystem::path & path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ArtifactError("cannot open '" + path.string() + "'");
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const std::filesystem::path & path, std::string_view content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw ArtifactError("cannot write '" + path.string() + "'");
    }
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

std::string sha256_hex(std::string_view data) {
    std::array<unsigned char, SHA256_DIGEST_LENGTH> digest{};
    SHA256(reinterpret_cast<const unsigned char *>(data.data()), data.size(), digest.data());
    std::string hex;
    hex.reserve(2 * digest.size());
    for (unsigned char c : digest) hex += fmt::format("{:02x}", c);
    return hex;
}

std::string sha256_file(const std::filesystem::path & path) {
    return sha256_hex(read_file(path));
}

} // namespace modsteer

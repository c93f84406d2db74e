#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

namespace modsteer {

void write_u32_le(std::ostream & os, uint32_t v);
void write_f32_le(std::ostream & os, float v);
uint32_t read_u32_le(std::istream & is);
float read_f32_le(std::istream & is);

// UTC ISO-8601 timestamp; honours SOURCE_DATE_EPOCH for reproducible artifacts.
std::string timestamp_utc();

std::string read_file(const std::filesystem::path & path);
void write_file(const std::filesystem::path & path, std::string_view content);

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path & path);

} // namespace modsteer

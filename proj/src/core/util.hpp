#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace hazgraph::util {

// --- hashing ---

// SHA-256 hex digest; used for content addressing of artifacts and cache keys.
std::string sha256_hex(std::string_view data);

// Fast seeded 64-bit hash (FNV-1a mixed through splitmix64). Not
// cryptographic; drives the deterministic mock backends.
std::uint64_t stable_hash64(std::string_view data, std::uint64_t seed = 0);

// Follow-up value in a splitmix64 stream; handy for expanding one hash into
// a sequence of pseudo-random words.
std::uint64_t splitmix64(std::uint64_t& state);

// Maps a 64-bit hash onto [0,1).
double hash_to_unit(std::uint64_t h);

// --- encodings ---

std::string to_hex(const unsigned char* data, std::size_t len);
std::string base64_encode(std::string_view data);
std::string base64_decode(std::string_view data);  // throws Error on bad input
bool is_valid_utf8(std::string_view data);

// --- strings ---

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
// Lowercases and strips everything that is not [a-z0-9]; used for tolerant
// header / category matching.
std::string normalize_key(std::string_view s);
std::vector<std::string> split_words(std::string_view s);
std::string truncate_words(std::string_view s, std::size_t max_words);
bool contains_ci(std::string_view haystack, std::string_view needle);

// Returns the first balanced top-level {...} block in the text, respecting
// string literals; model responses routinely wrap JSON in prose or fences.
std::optional<std::string> extract_first_json_object(std::string_view text);

// --- filesystem ---

std::string read_file(const std::filesystem::path& path);
std::optional<std::string> read_file_if_exists(const std::filesystem::path& path);
// Write via temp file + rename so concurrent readers never observe a
// partially written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view data);

std::optional<std::string> getenv_str(const std::string& name);

}  // namespace hazgraph::util

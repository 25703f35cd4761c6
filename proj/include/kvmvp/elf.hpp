/*
 * Copyright (C) 2026 The kvmvp Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef KVMVP_ELF_HPP
#define KVMVP_ELF_HPP

#include "kvmvp/sim_time.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace kvmvp {

struct SymbolRecord {
    std::string name;
    GuestAddr address = 0;
    std::uint64_t size = 0;

    bool operator==(const SymbolRecord&) const = default;
};

struct LoadSegment {
    GuestAddr vaddr = 0;
    GuestAddr paddr = 0;
    std::uint64_t file_offset = 0;
    std::uint64_t file_size = 0;
    std::uint64_t mem_size = 0;
    std::uint32_t flags = 0;
};

/// Function symbols of a guest image.
class SymbolTable {
public:
    SymbolTable() = default;
    explicit SymbolTable(std::vector<SymbolRecord> symbols) : symbols_(std::move(symbols)) {}

    const std::vector<SymbolRecord>& symbols() const { return symbols_; }
    bool empty() const { return symbols_.empty(); }
    void add(SymbolRecord s) { symbols_.push_back(std::move(s)); }

private:
    std::vector<SymbolRecord> symbols_;
};

struct ElfImage {
    std::uint16_t machine = 0;
    GuestAddr entry = 0;
    bool has_symbol_table = false;
    SymbolTable symbols;
    std::vector<LoadSegment> segments;
};

/// Parses a little-endian ELF64 executable. Throws ParseError (with the
/// offending file offset) for malformed headers or tables; a missing symbol
/// table yields an empty SymbolTable and a warning.
ElfImage parse_elf(std::span<const std::byte> image);

/// Input for build_elf(): one PT_LOAD per segment, identity mapped.
struct ElfSegmentSpec {
    GuestAddr address = 0;
    std::vector<std::uint8_t> bytes;
    std::uint32_t flags = 5; // R+X
};

struct ElfSpec {
    std::uint16_t machine = 0;
    GuestAddr entry = 0;
    std::vector<ElfSegmentSpec> segments;
    /// Emitted as global STT_FUNC symbols.
    std::vector<SymbolRecord> functions;
    bool section_headers = true;
    bool symbol_table = true;
};

/// Serializes a minimal ELF64 little-endian executable.
std::vector<std::byte> build_elf(const ElfSpec& spec);

/// Segments of `spec` laid out contiguously from the lowest address, gaps
/// zero-filled: the flat-binary twin of build_elf(spec).
std::vector<std::byte> flat_image(const ElfSpec& spec);

/// Reads a whole file; throws IoError.
std::vector<std::byte> read_file(const std::string& path);

/// Writes a whole file; throws IoError.
void write_file(const std::string& path, std::span<const std::byte> bytes);

} // namespace kvmvp

#endif

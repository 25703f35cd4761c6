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

#include "kvmvp/elf.hpp"

#include "kvmvp/errors.hpp"
#include "kvmvp/log.hpp"

#include <elf.h>
#include <fstream>
#include <iterator>

namespace kvmvp {

namespace {

class Reader {
public:
    explicit Reader(std::span<const std::byte> data) : data_(data) {}

    std::uint64_t size() const { return data_.size(); }

    bool fits(std::uint64_t offset, std::uint64_t len) const {
        return offset <= data_.size() && len <= data_.size() - offset;
    }

    template <typename T>
    T get(std::uint64_t offset, const char* what) const {
        if (!fits(offset, sizeof(T)))
            throw ParseError(std::string("truncated ") + what, offset);
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i)
            v |= static_cast<T>(std::to_integer<std::uint8_t>(data_[offset + i])) << (8 * i);
        return v;
    }

    std::uint8_t u8(std::uint64_t o, const char* w) const { return get<std::uint8_t>(o, w); }
    std::uint16_t u16(std::uint64_t o, const char* w) const { return get<std::uint16_t>(o, w); }
    std::uint32_t u32(std::uint64_t o, const char* w) const { return get<std::uint32_t>(o, w); }
    std::uint64_t u64(std::uint64_t o, const char* w) const { return get<std::uint64_t>(o, w); }

    std::string cstring(std::uint64_t table_offset, std::uint64_t table_size, std::uint32_t index) const {
        if (index >= table_size)
            throw ParseError("string index outside string table", table_offset + index);
        std::string out;
        for (std::uint64_t i = table_offset + index; i < table_offset + table_size; ++i) {
            const auto c = std::to_integer<char>(data_[i]);
            if (c == '\0')
                return out;
            out.push_back(c);
        }
        throw ParseError("unterminated string in string table", table_offset + index);
    }

private:
    std::span<const std::byte> data_;
};

struct Section {
    std::uint32_t type;
    std::uint64_t offset;
    std::uint64_t size;
    std::uint32_t link;
    std::uint64_t entsize;
    std::uint64_t header_offset;
};

} // namespace

ElfImage parse_elf(std::span<const std::byte> image) {
    Reader r(image);
    if (!r.fits(0, EI_NIDENT))
        throw ParseError("image shorter than the ELF identification", r.size());
    if (r.u8(EI_MAG0, "ident") != ELFMAG0 || r.u8(EI_MAG1, "ident") != ELFMAG1 ||
        r.u8(EI_MAG2, "ident") != ELFMAG2 || r.u8(EI_MAG3, "ident") != ELFMAG3)
        throw ParseError("bad ELF magic", 0);
    if (r.u8(EI_CLASS, "ident") != ELFCLASS64)
        throw ParseError("not a 64-bit ELF", EI_CLASS);
    if (r.u8(EI_DATA, "ident") != ELFDATA2LSB)
        throw ParseError("not a little-endian ELF", EI_DATA);
    if (!r.fits(0, sizeof(Elf64_Ehdr)))
        throw ParseError("truncated ELF header", r.size());

    ElfImage out;
    const auto type = r.u16(16, "e_type");
    if (type != ET_EXEC)
        throw ParseError("ELF type " + std::to_string(type) + " is not an executable", 16);
    out.machine = r.u16(18, "e_machine");
    out.entry = r.u64(24, "e_entry");
    const std::uint64_t phoff = r.u64(32, "e_phoff");
    const std::uint64_t shoff = r.u64(40, "e_shoff");
    const std::uint16_t phentsize = r.u16(54, "e_phentsize");
    const std::uint16_t phnum = r.u16(56, "e_phnum");
    const std::uint16_t shentsize = r.u16(58, "e_shentsize");
    const std::uint16_t shnum = r.u16(60, "e_shnum");

    if (phnum != 0) {
        if (phentsize < sizeof(Elf64_Phdr))
            throw ParseError("program header entry too small", 54);
        if (!r.fits(phoff, std::uint64_t{phentsize} * phnum))
            throw ParseError("program header table outside the image", phoff);
        for (std::uint16_t i = 0; i < phnum; ++i) {
            const std::uint64_t o = phoff + std::uint64_t{i} * phentsize;
            if (r.u32(o, "p_type") != PT_LOAD)
                continue;
            LoadSegment seg;
            seg.flags = r.u32(o + 4, "p_flags");
            seg.file_offset = r.u64(o + 8, "p_offset");
            seg.vaddr = r.u64(o + 16, "p_vaddr");
            seg.paddr = r.u64(o + 24, "p_paddr");
            seg.file_size = r.u64(o + 32, "p_filesz");
            seg.mem_size = r.u64(o + 40, "p_memsz");
            if (!r.fits(seg.file_offset, seg.file_size))
                throw ParseError("load segment data outside the image", o + 8);
            if (seg.mem_size < seg.file_size)
                throw ParseError("load segment memory size below file size", o + 40);
            out.segments.push_back(seg);
        }
    }

    if (shnum == 0 || shoff == 0) {
        log::warn("ELF image has no section headers; no symbols available");
        return out;
    }
    if (shentsize < sizeof(Elf64_Shdr))
        throw ParseError("section header entry too small", 58);
    if (!r.fits(shoff, std::uint64_t{shentsize} * shnum))
        throw ParseError("section header table outside the image", shoff);

    std::vector<Section> sections;
    sections.reserve(shnum);
    for (std::uint16_t i = 0; i < shnum; ++i) {
        const std::uint64_t o = shoff + std::uint64_t{i} * shentsize;
        Section s{r.u32(o + 4, "sh_type"), r.u64(o + 24, "sh_offset"), r.u64(o + 32, "sh_size"),
                  r.u32(o + 40, "sh_link"), r.u64(o + 56, "sh_entsize"), o};
        if (s.type != SHT_NOBITS && s.type != SHT_NULL && !r.fits(s.offset, s.size))
            throw ParseError("section data outside the image", o + 24);
        sections.push_back(s);
    }

    for (const Section& symtab : sections) {
        if (symtab.type != SHT_SYMTAB)
            continue;
        out.has_symbol_table = true;
        if (symtab.entsize < sizeof(Elf64_Sym))
            throw ParseError("symbol entry size too small", symtab.header_offset + 56);
        if (symtab.link >= sections.size() || sections[symtab.link].type != SHT_STRTAB)
            throw ParseError("symbol table does not link to a string table", symtab.header_offset + 40);
        const Section& strtab = sections[symtab.link];
        const std::uint64_t count = symtab.size / symtab.entsize;
        for (std::uint64_t i = 0; i < count; ++i) {
            const std::uint64_t o = symtab.offset + i * symtab.entsize;
            const std::uint8_t info = r.u8(o + 4, "st_info");
            if (ELF64_ST_TYPE(info) != STT_FUNC)
                continue;
            SymbolRecord sym;
            sym.name = r.cstring(strtab.offset, strtab.size, r.u32(o, "st_name"));
            sym.address = r.u64(o + 8, "st_value");
            sym.size = r.u64(o + 16, "st_size");
            if (sym.name.empty())
                continue;
            out.symbols.add(std::move(sym));
        }
    }
    if (!out.has_symbol_table)
        log::warn("ELF image has no symbol table (stripped?); idle annotation unavailable");
    return out;
}

std::vector<std::byte> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open '" + path + "'");
    std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad())
        throw IoError("failed reading '" + path + "'");
    std::vector<std::byte> out(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i)
        out[i] = static_cast<std::byte>(raw[i]);
    return out;
}

} // namespace kvmvp

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

#include <algorithm>
#include <cstring>
#include <elf.h>
#include <fstream>

namespace kvmvp {

namespace {

class Out {
public:
    std::size_t size() const { return buf_.size(); }

    template <typename T>
    void put(std::size_t at, T v) {
        for (std::size_t i = 0; i < sizeof(T); ++i)
            buf_.at(at + i) = static_cast<std::byte>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF);
    }

    std::size_t append(std::span<const std::uint8_t> bytes) {
        const std::size_t at = buf_.size();
        for (auto b : bytes)
            buf_.push_back(static_cast<std::byte>(b));
        return at;
    }

    std::size_t reserve(std::size_t n) {
        const std::size_t at = buf_.size();
        buf_.resize(at + n);
        return at;
    }

    void align(std::size_t a) { buf_.resize((buf_.size() + a - 1) / a * a); }

    std::vector<std::byte> take() { return std::move(buf_); }

private:
    std::vector<std::byte> buf_;
};

std::uint32_t add_string(std::vector<std::uint8_t>& table, std::string_view s) {
    const auto at = static_cast<std::uint32_t>(table.size());
    table.insert(table.end(), s.begin(), s.end());
    table.push_back(0);
    return at;
}

} // namespace

std::vector<std::byte> build_elf(const ElfSpec& spec) {
    Out out;
    const std::size_t phnum = spec.segments.size();
    out.reserve(sizeof(Elf64_Ehdr));
    const std::size_t phoff = out.reserve(phnum * sizeof(Elf64_Phdr));

    std::vector<std::size_t> seg_offsets;
    for (const auto& seg : spec.segments) {
        out.align(8);
        seg_offsets.push_back(out.append(seg.bytes));
    }

    for (std::size_t i = 0; i < phnum; ++i) {
        const auto& seg = spec.segments[i];
        const std::size_t o = phoff + i * sizeof(Elf64_Phdr);
        out.put<std::uint32_t>(o + 0, PT_LOAD);
        out.put<std::uint32_t>(o + 4, seg.flags);
        out.put<std::uint64_t>(o + 8, seg_offsets[i]);
        out.put<std::uint64_t>(o + 16, seg.address);
        out.put<std::uint64_t>(o + 24, seg.address);
        out.put<std::uint64_t>(o + 32, seg.bytes.size());
        out.put<std::uint64_t>(o + 40, seg.bytes.size());
        out.put<std::uint64_t>(o + 48, 8);
    }

    // section layout: null, one .text per segment, [.symtab, .strtab], .shstrtab
    std::vector<std::uint8_t> shstr{0};
    std::vector<std::uint32_t> text_names;
    for (std::size_t i = 0; i < phnum; ++i)
        text_names.push_back(add_string(shstr, i == 0 ? ".text" : ".text." + std::to_string(i)));
    const std::uint32_t symtab_name = add_string(shstr, ".symtab");
    const std::uint32_t strtab_name = add_string(shstr, ".strtab");
    const std::uint32_t shstrtab_name = add_string(shstr, ".shstrtab");

    const std::size_t first_text = 1;
    const std::size_t symtab_index = first_text + phnum;
    const std::size_t strtab_index = symtab_index + 1;
    const std::size_t shstrtab_index = spec.symbol_table ? strtab_index + 1 : symtab_index;
    const std::size_t shnum = shstrtab_index + 1;

    std::size_t symtab_off = 0, symtab_size = 0, strtab_off = 0, strtab_size = 0;
    if (spec.section_headers && spec.symbol_table) {
        std::vector<std::uint8_t> strtab{0};
        std::vector<std::uint32_t> names;
        for (const auto& f : spec.functions)
            names.push_back(add_string(strtab, f.name));

        out.align(8);
        symtab_off = out.reserve((spec.functions.size() + 1) * sizeof(Elf64_Sym));
        symtab_size = out.size() - symtab_off;
        for (std::size_t i = 0; i < spec.functions.size(); ++i) {
            const auto& f = spec.functions[i];
            const std::size_t o = symtab_off + (i + 1) * sizeof(Elf64_Sym);
            std::uint16_t shndx = SHN_ABS;
            for (std::size_t s = 0; s < phnum; ++s) {
                const auto& seg = spec.segments[s];
                if (f.address >= seg.address && f.address < seg.address + seg.bytes.size())
                    shndx = static_cast<std::uint16_t>(first_text + s);
            }
            out.put<std::uint32_t>(o + 0, names[i]);
            out.put<std::uint8_t>(o + 4, ELF64_ST_INFO(STB_GLOBAL, STT_FUNC));
            out.put<std::uint8_t>(o + 5, STV_DEFAULT);
            out.put<std::uint16_t>(o + 6, shndx);
            out.put<std::uint64_t>(o + 8, f.address);
            out.put<std::uint64_t>(o + 16, f.size);
        }
        strtab_off = out.append(strtab);
        strtab_size = strtab.size();
    }

    std::size_t shoff = 0;
    if (spec.section_headers) {
        const std::size_t shstr_off = out.append(shstr);
        out.align(8);
        shoff = out.reserve(shnum * sizeof(Elf64_Shdr));
        auto section = [&](std::size_t index, std::uint32_t name, std::uint32_t type, std::uint64_t flags,
                           std::uint64_t addr, std::uint64_t offset, std::uint64_t size, std::uint32_t link,
                           std::uint32_t info, std::uint64_t align, std::uint64_t entsize) {
            const std::size_t o = shoff + index * sizeof(Elf64_Shdr);
            out.put<std::uint32_t>(o + 0, name);
            out.put<std::uint32_t>(o + 4, type);
            out.put<std::uint64_t>(o + 8, flags);
            out.put<std::uint64_t>(o + 16, addr);
            out.put<std::uint64_t>(o + 24, offset);
            out.put<std::uint64_t>(o + 32, size);
            out.put<std::uint32_t>(o + 40, link);
            out.put<std::uint32_t>(o + 44, info);
            out.put<std::uint64_t>(o + 48, align);
            out.put<std::uint64_t>(o + 56, entsize);
        };
        for (std::size_t i = 0; i < phnum; ++i)
            section(first_text + i, text_names[i], SHT_PROGBITS, SHF_ALLOC | SHF_EXECINSTR, spec.segments[i].address,
                    seg_offsets[i], spec.segments[i].bytes.size(), 0, 0, 8, 0);
        if (spec.symbol_table) {
            section(symtab_index, symtab_name, SHT_SYMTAB, 0, 0, symtab_off, symtab_size,
                    static_cast<std::uint32_t>(strtab_index), 1, 8, sizeof(Elf64_Sym));
            section(strtab_index, strtab_name, SHT_STRTAB, 0, 0, strtab_off, strtab_size, 0, 0, 1, 0);
        }
        section(shstrtab_index, shstrtab_name, SHT_STRTAB, 0, 0, shstr_off, shstr.size(), 0, 0, 1, 0);
    }

    const std::uint8_t ident[EI_NIDENT] = {ELFMAG0, ELFMAG1, ELFMAG2, ELFMAG3, ELFCLASS64, ELFDATA2LSB, EV_CURRENT};
    for (std::size_t i = 0; i < EI_NIDENT; ++i)
        out.put<std::uint8_t>(i, ident[i]);
    out.put<std::uint16_t>(16, ET_EXEC);
    out.put<std::uint16_t>(18, spec.machine);
    out.put<std::uint32_t>(20, EV_CURRENT);
    out.put<std::uint64_t>(24, spec.entry);
    out.put<std::uint64_t>(32, phnum ? phoff : 0);
    out.put<std::uint64_t>(40, shoff);
    out.put<std::uint32_t>(48, 0);
    out.put<std::uint16_t>(52, sizeof(Elf64_Ehdr));
    out.put<std::uint16_t>(54, sizeof(Elf64_Phdr));
    out.put<std::uint16_t>(56, static_cast<std::uint16_t>(phnum));
    out.put<std::uint16_t>(58, sizeof(Elf64_Shdr));
    out.put<std::uint16_t>(60, static_cast<std::uint16_t>(spec.section_headers ? shnum : 0));
    out.put<std::uint16_t>(62, static_cast<std::uint16_t>(spec.section_headers ? shstrtab_index : 0));
    return out.take();
}

std::vector<std::byte> flat_image(const ElfSpec& spec) {
    if (spec.segments.empty())
        return {};
    GuestAddr lo = spec.segments.front().address, hi = lo;
    for (const auto& seg : spec.segments) {
        lo = std::min(lo, seg.address);
        hi = std::max(hi, seg.address + seg.bytes.size());
    }
    std::vector<std::byte> out(hi - lo);
    for (const auto& seg : spec.segments)
        std::memcpy(out.data() + (seg.address - lo), seg.bytes.data(), seg.bytes.size());
    return out;
}

void write_file(const std::string& path, std::span<const std::byte> bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f)
        throw IoError("cannot create '" + path + "'");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f)
        throw IoError("failed writing '" + path + "'");
}

} // namespace kvmvp

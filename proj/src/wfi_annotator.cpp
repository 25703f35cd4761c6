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

#include "kvmvp/wfi_annotator.hpp"

#include "kvmvp/errors.hpp"
#include "kvmvp/log.hpp"

#include <algorithm>
#include <cstring>

namespace kvmvp {

std::string_view to_string(HitKind k) {
    switch (k) {
    case HitKind::idle_hint:
        return "idle-hint";
    case HitKind::user_breakpoint:
        return "user-breakpoint";
    case HitKind::spurious:
        return "spurious";
    }
    return "?";
}

std::optional<SymbolRecord> find_idle_symbol(const SymbolTable& symbols, std::string_view name) {
    std::optional<SymbolRecord> found;
    for (const auto& s : symbols.symbols()) {
        if (s.name != name)
            continue;
        if (found) {
            throw AmbiguityError("symbol '" + std::string(name) + "' defined twice: at " + log::hex(found->address) +
                                 " (size " + std::to_string(found->size) + ") and at " + log::hex(s.address) +
                                 " (size " + std::to_string(s.size) + ")");
        }
        found = s;
    }
    return found;
}

GuestAddr locate_wfi(const GuestMemoryView& memory, const SymbolRecord& symbol, const WfiPattern& pattern) {
    const std::uint64_t plen = pattern.bytes.size();
    const std::uint64_t align = pattern.alignment == 0 ? 1 : pattern.alignment;
    if (plen == 0)
        throw AnnotationError("empty WFI pattern");
    if (!memory.contains(symbol.address, symbol.size))
        throw AnnotationError("body of '" + symbol.name + "' at " + log::hex(symbol.address) + " is not readable");

    std::optional<GuestAddr> first;
    const GuestAddr end = symbol.address + symbol.size;
    GuestAddr addr = (symbol.address + align - 1) / align * align;
    for (; addr + plen <= end && addr + plen > addr; addr += align) {
        const std::byte* p = memory.bytes.data() + (addr - memory.base);
        if (std::memcmp(p, pattern.bytes.data(), plen) != 0)
            continue;
        if (!first) {
            first = addr;
        } else {
            log::info("additional WFI in '" + symbol.name + "' at " + log::hex(addr) + " ignored");
        }
    }
    if (!first)
        throw AnnotationError("no WFI instruction inside '" + symbol.name + "' [" + log::hex(symbol.address) + ", " +
                              log::hex(end) + ")");
    return *first;
}

HitKind classify_hit(GuestAddr pc, const std::optional<IdleAnnotation>& annotation,
                     const std::set<GuestAddr>& user_breakpoints) {
    if (annotation && pc == annotation->wfi_address)
        return HitKind::idle_hint;
    if (user_breakpoints.contains(pc))
        return HitKind::user_breakpoint;
    return HitKind::spurious;
}

std::optional<IdleAnnotation> annotate_idle(const SymbolTable& symbols, const GuestMemoryView& memory,
                                            std::string_view idle_symbol, const WfiPattern& pattern) {
    auto sym = find_idle_symbol(symbols, idle_symbol);
    if (!sym) {
        log::warn("idle symbol '" + std::string(idle_symbol) + "' not found; WFI annotation disabled");
        return std::nullopt;
    }
    try {
        const GuestAddr wfi = locate_wfi(memory, *sym, pattern);
        log::info("WFI annotation: '" + sym->name + "' WFI at " + log::hex(wfi));
        return IdleAnnotation{*sym, wfi, pattern};
    } catch (const AnnotationError& e) {
        log::warn(std::string("WFI annotation disabled: ") + e.what());
        return std::nullopt;
    }
}

} // namespace kvmvp

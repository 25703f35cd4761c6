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

#ifndef KVMVP_WFI_ANNOTATOR_HPP
#define KVMVP_WFI_ANNOTATOR_HPP

#include "kvmvp/elf.hpp"
#include "kvmvp/exec_backend.hpp"

#include <cstddef>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>

namespace kvmvp {

inline constexpr std::string_view kDefaultIdleSymbol = "cpu_do_idle";

/// Where the idle routine parks the core: a WFI inside the idle symbol.
struct IdleAnnotation {
    SymbolRecord symbol;
    GuestAddr wfi_address = 0;
    WfiPattern pattern;
};

/// Read-only window onto guest memory starting at `base`.
struct GuestMemoryView {
    GuestAddr base = 0;
    std::span<const std::byte> bytes;

    bool contains(GuestAddr addr, std::uint64_t len) const {
        return addr >= base && len <= bytes.size() && addr - base <= bytes.size() - len;
    }
};

enum class HitKind { idle_hint, user_breakpoint, spurious };

std::string_view to_string(HitKind k);

/// Exact-name lookup. Throws AmbiguityError if several symbols carry the name.
std::optional<SymbolRecord> find_idle_symbol(const SymbolTable& symbols, std::string_view name);

/// First aligned occurrence of `pattern` inside the symbol's body. Throws
/// AnnotationError if there is none or the body is not readable.
GuestAddr locate_wfi(const GuestMemoryView& memory, const SymbolRecord& symbol, const WfiPattern& pattern);

HitKind classify_hit(GuestAddr pc, const std::optional<IdleAnnotation>& annotation, const std::set<GuestAddr>& user_breakpoints);

/// Symbol lookup plus WFI search. Missing symbols and missing patterns
/// disable annotation with a warning instead of failing.
std::optional<IdleAnnotation> annotate_idle(const SymbolTable& symbols, const GuestMemoryView& memory,
                                            std::string_view idle_symbol, const WfiPattern& pattern);

} // namespace kvmvp

#endif

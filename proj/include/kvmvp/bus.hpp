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

#ifndef KVMVP_BUS_HPP
#define KVMVP_BUS_HPP

#include "kvmvp/sim_time.hpp"

#include <array>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace kvmvp {

enum class AccessKind : std::uint8_t { read, write };

enum class TransactionStatus : std::uint8_t { incomplete, ok, address_error, device_error };

std::string_view to_string(TransactionStatus s);

/// A single bus access of 1, 2, 4 or 8 bytes, little-endian.
struct Transaction {
    AccessKind kind = AccessKind::read;
    GuestAddr address = 0;
    std::uint8_t size = 4;
    std::array<std::uint8_t, 8> data{};
    TransactionStatus status = TransactionStatus::incomplete;
    CoreId initiator = 0;

    static Transaction read(GuestAddr address, std::uint8_t size, CoreId initiator = 0);
    static Transaction write(GuestAddr address, std::uint8_t size, std::uint64_t value, CoreId initiator = 0);
    static Transaction write_bytes(GuestAddr address, std::span<const std::uint8_t> bytes, CoreId initiator = 0);

    std::uint64_t value() const;
    void set_value(std::uint64_t v);
    std::span<const std::uint8_t> bytes() const { return {data.data(), size}; }

    bool is_read() const { return kind == AccessKind::read; }
    bool is_write() const { return kind == AccessKind::write; }
};

bool valid_access_size(std::size_t size);

/// Direct access to a RAM target's backing store.
///
/// Grants stay valid until the issuing target revokes them; holders check
/// valid() before deriving new mappings.
struct DmiGrant {
    GuestAddr base = 0;
    std::uint64_t size = 0;
    std::byte* host = nullptr;
    bool readable = true;
    bool writable = true;
    std::shared_ptr<const std::atomic<bool>> validity;

    bool valid() const { return validity && validity->load(std::memory_order_acquire); }
    bool contains(GuestAddr addr, std::uint64_t len) const {
        return addr >= base && len <= size && addr - base <= size - len;
    }
    std::span<std::byte> bytes() const { return {host, static_cast<std::size_t>(size)}; }
};

class Target {
public:
    virtual ~Target() = default;

    /// Handles `t` at `offset` relative to the mapping base and sets its status.
    virtual void transport(Transaction& t, std::uint64_t offset) = 0;

    /// Direct-access grant for [offset, offset+size); MMIO targets deny.
    virtual std::optional<DmiGrant> dmi(std::uint64_t /*offset*/, std::uint64_t /*size*/, GuestAddr /*mapped_base*/) {
        return std::nullopt;
    }

    virtual std::string_view name() const = 0;
};

/// Address-routed interconnect. transport(), map_target() and
/// acquire_dmi() are coordinator-context operations.
class Bus {
public:
    struct Mapping {
        GuestAddr base;
        std::uint64_t size;
        Target* target;

        GuestAddr last() const { return base + (size - 1); }
    };

    /// Throws ConfigError on zero size, wrap-around or overlap.
    void map_target(GuestAddr base, std::uint64_t size, Target& target);

    Transaction& transport(Transaction& t);
    std::optional<DmiGrant> acquire_dmi(GuestAddr base, std::uint64_t size);

    const Mapping* find(GuestAddr addr) const;
    const std::vector<Mapping>& mappings() const { return map_; }

    /// Installed by the platform to audit the calling context of every transport.
    void set_context_probe(std::function<bool()> on_coordinator) { probe_ = std::move(on_coordinator); }
    std::uint64_t transports() const { return transports_; }
    std::uint64_t off_coordinator_transports() const { return off_coordinator_; }

private:
    std::vector<Mapping> map_; // sorted by base
    std::function<bool()> probe_;
    std::uint64_t transports_ = 0;
    std::uint64_t off_coordinator_ = 0;
};

/// Page-aligned guest RAM.
class Ram final : public Target {
public:
    explicit Ram(std::uint64_t size, std::string name = "ram");
    ~Ram() override;

    Ram(const Ram&) = delete;
    Ram& operator=(const Ram&) = delete;

    void transport(Transaction& t, std::uint64_t offset) override;
    std::optional<DmiGrant> dmi(std::uint64_t offset, std::uint64_t size, GuestAddr mapped_base) override;
    std::string_view name() const override { return name_; }

    /// Invalidates every grant issued so far.
    void revoke_dmi();

    std::uint64_t size() const { return size_; }
    std::span<std::byte> bytes() { return {data_, static_cast<std::size_t>(size_)}; }
    std::span<const std::byte> bytes() const { return {data_, static_cast<std::size_t>(size_)}; }

    /// 64-bit FNV-1a over the whole store.
    std::uint64_t digest() const;

private:
    std::string name_;
    std::uint64_t size_;
    std::byte* data_ = nullptr;
    std::shared_ptr<std::atomic<bool>> validity_;
};

} // namespace kvmvp

#endif

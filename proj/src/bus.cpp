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

#include "kvmvp/bus.hpp"

#include "kvmvp/errors.hpp"
#include "kvmvp/log.hpp"

#include <algorithm>
#include <cstring>
#include <new>
#include <sys/mman.h>

namespace kvmvp {

std::string_view to_string(TransactionStatus s) {
    switch (s) {
    case TransactionStatus::incomplete:
        return "incomplete";
    case TransactionStatus::ok:
        return "ok";
    case TransactionStatus::address_error:
        return "address-error";
    case TransactionStatus::device_error:
        return "device-error";
    }
    return "?";
}

bool valid_access_size(std::size_t size) { return size == 1 || size == 2 || size == 4 || size == 8; }

Transaction Transaction::read(GuestAddr address, std::uint8_t size, CoreId initiator) {
    if (!valid_access_size(size))
        throw ContractError("invalid access size " + std::to_string(size));
    Transaction t;
    t.kind = AccessKind::read;
    t.address = address;
    t.size = size;
    t.initiator = initiator;
    return t;
}

Transaction Transaction::write(GuestAddr address, std::uint8_t size, std::uint64_t value, CoreId initiator) {
    Transaction t = read(address, size, initiator);
    t.kind = AccessKind::write;
    t.set_value(value);
    return t;
}

Transaction Transaction::write_bytes(GuestAddr address, std::span<const std::uint8_t> bytes, CoreId initiator) {
    Transaction t = read(address, static_cast<std::uint8_t>(bytes.size()), initiator);
    t.kind = AccessKind::write;
    std::copy(bytes.begin(), bytes.end(), t.data.begin());
    return t;
}

std::uint64_t Transaction::value() const {
    std::uint64_t v = 0;
    for (unsigned i = 0; i < size; ++i)
        v |= static_cast<std::uint64_t>(data[i]) << (8 * i);
    return v;
}

void Transaction::set_value(std::uint64_t v) {
    data.fill(0);
    for (unsigned i = 0; i < size; ++i)
        data[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

void Bus::map_target(GuestAddr base, std::uint64_t size, Target& target) {
    if (size == 0)
        throw ConfigError("zero-size mapping for " + std::string(target.name()) + " at " + log::hex(base));
    if (base + (size - 1) < base)
        throw ConfigError("mapping for " + std::string(target.name()) + " wraps the address space");
    const GuestAddr last = base + (size - 1);
    for (const auto& m : map_) {
        if (base <= m.last() && m.base <= last) {
            throw ConfigError("mapping " + std::string(target.name()) + " [" + log::hex(base) + ", " +
                              log::hex(last) + "] overlaps " + std::string(m.target->name()) + " [" +
                              log::hex(m.base) + ", " + log::hex(m.last()) + "]");
        }
    }
    auto pos = std::lower_bound(map_.begin(), map_.end(), base,
                                [](const Mapping& m, GuestAddr b) { return m.base < b; });
    map_.insert(pos, Mapping{base, size, &target});
}

const Bus::Mapping* Bus::find(GuestAddr addr) const {
    auto it = std::upper_bound(map_.begin(), map_.end(), addr,
                               [](GuestAddr a, const Mapping& m) { return a < m.base; });
    if (it == map_.begin())
        return nullptr;
    --it;
    return addr <= it->last() ? &*it : nullptr;
}

Transaction& Bus::transport(Transaction& t) {
    ++transports_;
    if (probe_ && !probe_())
        ++off_coordinator_;

    const Mapping* m = find(t.address);
    if (m == nullptr || t.size == 0 || t.address + (t.size - 1) > m->last()) {
        t.status = TransactionStatus::address_error;
        return t;
    }
    t.status = TransactionStatus::incomplete;
    m->target->transport(t, t.address - m->base);
    if (t.status == TransactionStatus::incomplete)
        t.status = TransactionStatus::device_error;
    return t;
}

std::optional<DmiGrant> Bus::acquire_dmi(GuestAddr base, std::uint64_t size) {
    if (size == 0)
        return std::nullopt;
    const Mapping* m = find(base);
    if (m == nullptr || base + (size - 1) < base || base + (size - 1) > m->last())
        return std::nullopt;
    return m->target->dmi(base - m->base, size, m->base);
}

Ram::Ram(std::uint64_t size, std::string name)
    : name_(std::move(name)), size_(size), validity_(std::make_shared<std::atomic<bool>>(true)) {
    if (size_ == 0)
        throw ConfigError("RAM size must be positive");
    void* p = ::mmap(nullptr, size_, PROT_READ | PROT_WRITE, MAP_PRIVATE | MAP_ANONYMOUS | MAP_NORESERVE, -1, 0);
    if (p == MAP_FAILED)
        throw std::bad_alloc();
    data_ = static_cast<std::byte*>(p);
}

Ram::~Ram() {
    validity_->store(false, std::memory_order_release);
    if (data_ != nullptr)
        ::munmap(data_, size_);
}

void Ram::transport(Transaction& t, std::uint64_t offset) {
    if (offset > size_ || t.size > size_ - offset) {
        t.status = TransactionStatus::address_error;
        return;
    }
    if (t.is_read()) {
        t.data.fill(0);
        std::memcpy(t.data.data(), data_ + offset, t.size);
    } else {
        std::memcpy(data_ + offset, t.data.data(), t.size);
    }
    t.status = TransactionStatus::ok;
}

std::optional<DmiGrant> Ram::dmi(std::uint64_t offset, std::uint64_t size, GuestAddr mapped_base) {
    if (offset > size_ || size > size_ - offset)
        return std::nullopt;
    DmiGrant g;
    g.base = mapped_base + offset;
    g.size = size;
    g.host = data_ + offset;
    g.validity = validity_;
    return g;
}

void Ram::revoke_dmi() {
    validity_->store(false, std::memory_order_release);
    validity_ = std::make_shared<std::atomic<bool>>(true);
}

std::uint64_t Ram::digest() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    const auto* p = reinterpret_cast<const unsigned char*>(data_);
    for (std::uint64_t i = 0; i < size_; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace kvmvp

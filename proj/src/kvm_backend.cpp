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

#include "kvmvp/kvm_backend.hpp"

#include "kvmvp/errors.hpp"
#include "kvmvp/log.hpp"

#if defined(__aarch64__) && defined(__linux__)
#define KVMVP_HAVE_KVM 1
#include <algorithm>
#include <atomic>
#include <cerrno>
#include <csignal>
#include <cstddef>
#include <cstring>
#include <ctime>
#include <fcntl.h>
#include <linux/kvm.h>
#include <mutex>
#include <pthread.h>
#include <sys/ioctl.h>
#include <sys/mman.h>
#include <unistd.h>
#include <utility>
#else
#define KVMVP_HAVE_KVM 0
#endif

namespace kvmvp {

#if !KVMVP_HAVE_KVM

bool hardware_backend_compiled() { return false; }

std::string hardware_backend_unavailable_reason() {
    return "the hardware backend needs an AArch64 Linux host; this build does not include it";
}

std::shared_ptr<KvmVm> KvmVm::create(const std::vector<GuestRegion>&) {
    throw CapabilityError(hardware_backend_unavailable_reason());
}

#else

namespace {

constexpr int kStopSignal = SIGUSR1;

class Fd {
public:
    Fd() = default;
    explicit Fd(int fd) : fd_(fd) {}
    ~Fd() {
        if (fd_ >= 0)
            ::close(fd_);
    }
    Fd(Fd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
    Fd& operator=(Fd&& o) noexcept {
        if (this != &o) {
            if (fd_ >= 0)
                ::close(fd_);
            fd_ = std::exchange(o.fd_, -1);
        }
        return *this;
    }
    int get() const { return fd_; }

private:
    int fd_ = -1;
};

std::string errno_text(const char* what) { return std::string(what) + ": " + std::strerror(errno); }

// retries interrupted setup calls; KVM_RUN is issued directly
template <typename Arg>
int checked_ioctl(int fd, unsigned long request, Arg arg) {
    int r;
    do {
        r = ::ioctl(fd, request, arg);
    } while (r < 0 && errno == EINTR);
    return r;
}

void install_stop_handler() {
    static std::once_flag once;
    std::call_once(once, [] {
        struct sigaction sa {};
        sa.sa_handler = [](int) {};
        sigemptyset(&sa.sa_mask);
        sa.sa_flags = 0; // no SA_RESTART: KVM_RUN must return EINTR
        if (::sigaction(kStopSignal, &sa, nullptr) != 0)
            throw BackendError(errno_text("sigaction"));
    });
}

constexpr std::uint64_t core_reg_id(std::size_t offset) {
    return KVM_REG_ARM64 | KVM_REG_SIZE_U64 | KVM_REG_ARM_CORE | (offset / sizeof(std::uint32_t));
}

// BCR: enable, EL1+EL0, byte address select 0xf
constexpr std::uint64_t kBcrExec = (0xFULL << 5) | (3ULL << 1) | 1ULL;

class Vm;

class Vcpu final : public ExecBackend {
public:
    Vcpu(std::shared_ptr<Vm> vm, CoreId index, Fd fd, kvm_run* run, std::size_t run_size, unsigned bp_slots);
    ~Vcpu() override {
        if (run_ != nullptr)
            ::munmap(run_, run_size_);
    }

    BackendRunResult run(std::optional<Cycles> budget_hint) override;

    void request_stop() noexcept override {
        stop_.store(true, std::memory_order_release);
        run_->immediate_exit = 1;
        if (in_run_.load(std::memory_order_acquire))
            ::pthread_kill(thread_, kStopSignal);
    }
    void clear_stop() noexcept override {
        stop_.store(false, std::memory_order_release);
        run_->immediate_exit = 0;
    }

    GuestAddr get_pc() const override { return get_reg(core_reg_id(offsetof(kvm_regs, regs.pc))); }
    void set_pc(GuestAddr pc) override {
        set_reg(core_reg_id(offsetof(kvm_regs, regs.pc)), pc);
        step_over_ = false;
    }
    unsigned register_count() const override { return 31; }
    std::uint64_t read_reg(unsigned index) const override {
        check_index(index);
        return get_reg(core_reg_id(offsetof(kvm_regs, regs.regs) + index * sizeof(std::uint64_t)));
    }
    void write_reg(unsigned index, std::uint64_t value) override {
        check_index(index);
        set_reg(core_reg_id(offsetof(kvm_regs, regs.regs) + index * sizeof(std::uint64_t)), value);
    }

    void map_guest_memory(const DmiGrant& grant, GuestAddr guest_base) override;
    void complete_mmio(const Transaction& response) override;
    Cycles retire_idle_instruction() override {
        set_pc(get_pc() + 4);
        return 1;
    }
    void set_interrupt_pending(bool pending) override;

    void insert_breakpoint(GuestAddr addr) override;
    void remove_breakpoint(GuestAddr addr) override;

    bool exact_counts() const noexcept override { return false; }
    WfiPattern wfi_pattern() const override { return aarch64_wfi_pattern(); }
    std::string_view name() const noexcept override { return "kvm"; }

private:
    static void check_index(unsigned index) {
        if (index >= 31)
            throw ContractError("register index " + std::to_string(index) + " out of range");
    }
    std::uint64_t get_reg(std::uint64_t id) const;
    void set_reg(std::uint64_t id, std::uint64_t value);
    void apply_debug(bool single_step);
    BackendRunResult decode_exit();

    std::shared_ptr<Vm> vm_;
    CoreId index_;
    Fd fd_;
    kvm_run* run_;
    std::size_t run_size_;
    unsigned bp_slots_;

    std::atomic<bool> stop_{false};
    std::atomic<bool> in_run_{false};
    pthread_t thread_{};

    std::vector<GuestAddr> breakpoints_;
    bool step_over_ = false;
    bool mmio_pending_ = false;
    bool irq_level_ = false;
};

class Vm final : public KvmVm, public std::enable_shared_from_this<Vm> {
public:
    Vm(Fd kvm, Fd vm) : kvm_(std::move(kvm)), vm_(std::move(vm)) {}

    void setup(const std::vector<GuestRegion>& regions) {
        if (regions.empty())
            throw ConfigError("a VM needs at least one RAM region");
        for (const auto& r : regions)
            add_region(r.grant, r.guest_base);

        const int size = checked_ioctl(kvm_.get(), KVM_GET_VCPU_MMAP_SIZE, 0);
        if (size <= 0)
            throw BackendError(errno_text("KVM_GET_VCPU_MMAP_SIZE"));
        run_size_ = static_cast<std::size_t>(size);

        const int bps = checked_ioctl(vm_.get(), KVM_CHECK_EXTENSION, KVM_CAP_GUEST_DEBUG_HW_BPS);
        bp_slots_ = bps > 0 ? static_cast<unsigned>(bps) : 0;

        if (checked_ioctl(vm_.get(), KVM_ARM_PREFERRED_TARGET, &init_) < 0)
            throw BackendError(errno_text("KVM_ARM_PREFERRED_TARGET"));
        init_.features[0] |= 1U << KVM_ARM_VCPU_PSCI_0_2;
        install_stop_handler();
    }

    void add_region(const DmiGrant& grant, GuestAddr guest_base) {
        if (!grant.valid() || !grant.writable)
            throw ConfigError("guest RAM at " + log::hex(guest_base) + " needs a valid writable grant");
        if (grant.size == 0)
            throw ConfigError("guest RAM at " + log::hex(guest_base) + " has zero size");
        std::lock_guard lock(mutex_);
        for (const auto& [base, size] : regions_) {
            if (base == guest_base && size == grant.size)
                return; // already registered (several vCPUs share the VM)
            if (guest_base < base + size && base < guest_base + grant.size)
                throw ConfigError("guest RAM [" + log::hex(guest_base) + ", +" + log::hex(grant.size) +
                                  ") overlaps [" + log::hex(base) + ", +" + log::hex(size) + ")");
        }
        kvm_userspace_memory_region region{};
        region.slot = static_cast<std::uint32_t>(regions_.size());
        region.guest_phys_addr = guest_base;
        region.memory_size = grant.size;
        region.userspace_addr = reinterpret_cast<std::uint64_t>(grant.host);
        if (checked_ioctl(vm_.get(), KVM_SET_USER_MEMORY_REGION, &region) < 0)
            throw BackendError(errno_text(("KVM_SET_USER_MEMORY_REGION slot " + std::to_string(region.slot) + " [" +
                                           log::hex(guest_base) + ", +" + log::hex(grant.size) + ")")
                                              .c_str()));
        regions_.emplace_back(guest_base, grant.size);
    }

    std::unique_ptr<ExecBackend> create_vcpu(CoreId index, GuestAddr entry) override {
        Fd fd(checked_ioctl(vm_.get(), KVM_CREATE_VCPU, static_cast<unsigned long>(index)));
        if (fd.get() < 0)
            throw BackendError(errno_text(("KVM_CREATE_VCPU " + std::to_string(index)).c_str()));
        void* mem = ::mmap(nullptr, run_size_, PROT_READ | PROT_WRITE, MAP_SHARED, fd.get(), 0);
        if (mem == MAP_FAILED)
            throw BackendError(errno_text("mmap of the vCPU run page"));
        auto* run = static_cast<kvm_run*>(mem);
        if (checked_ioctl(fd.get(), KVM_ARM_VCPU_INIT, &init_) < 0) {
            ::munmap(mem, run_size_);
            throw BackendError(errno_text("KVM_ARM_VCPU_INIT"));
        }
        auto vcpu = std::make_unique<Vcpu>(shared_from_this(), index, std::move(fd), run, run_size_, bp_slots_);
        vcpu->set_pc(entry);
        return vcpu;
    }

    std::size_t memory_slots() const override {
        std::lock_guard lock(mutex_);
        return regions_.size();
    }
    unsigned breakpoint_slots() const override { return bp_slots_; }

    int fd() const { return vm_.get(); }

private:
    Fd kvm_;
    Fd vm_;
    mutable std::mutex mutex_;
    std::vector<std::pair<GuestAddr, std::uint64_t>> regions_;
    std::size_t run_size_ = 0;
    unsigned bp_slots_ = 0;
    kvm_vcpu_init init_{};
};

Vcpu::Vcpu(std::shared_ptr<Vm> vm, CoreId index, Fd fd, kvm_run* run, std::size_t run_size, unsigned bp_slots)
    : vm_(std::move(vm)), index_(index), fd_(std::move(fd)), run_(run), run_size_(run_size), bp_slots_(bp_slots) {
    // the stop signal is delivered only while KVM_RUN executes
    sigset_t current;
    ::pthread_sigmask(SIG_SETMASK, nullptr, &current);
    sigdelset(&current, kStopSignal);
    alignas(kvm_signal_mask) std::byte buf[sizeof(kvm_signal_mask) + sizeof(sigset_t)]{};
    auto* mask = reinterpret_cast<kvm_signal_mask*>(buf);
    mask->len = 8; // kernel sigset size on arm64
    std::memcpy(mask->sigset, &current, 8);
    if (checked_ioctl(fd_.get(), KVM_SET_SIGNAL_MASK, mask) < 0)
        throw BackendError(errno_text("KVM_SET_SIGNAL_MASK"));
}

std::uint64_t Vcpu::get_reg(std::uint64_t id) const {
    std::uint64_t value = 0;
    kvm_one_reg reg{id, reinterpret_cast<std::uint64_t>(&value)};
    if (checked_ioctl(fd_.get(), KVM_GET_ONE_REG, &reg) < 0)
        throw BackendError(errno_text("KVM_GET_ONE_REG"));
    return value;
}

void Vcpu::set_reg(std::uint64_t id, std::uint64_t value) {
    kvm_one_reg reg{id, reinterpret_cast<std::uint64_t>(&value)};
    if (checked_ioctl(fd_.get(), KVM_SET_ONE_REG, &reg) < 0)
        throw BackendError(errno_text("KVM_SET_ONE_REG"));
}

void Vcpu::map_guest_memory(const DmiGrant& grant, GuestAddr guest_base) { vm_->add_region(grant, guest_base); }

void Vcpu::apply_debug(bool single_step) {
    kvm_guest_debug dbg{};
    if (!breakpoints_.empty() || single_step) {
        dbg.control = KVM_GUESTDBG_ENABLE;
        if (single_step) {
            // step over the breakpoint we stopped at with all breakpoints off
            dbg.control |= KVM_GUESTDBG_SINGLESTEP;
        } else {
            dbg.control |= KVM_GUESTDBG_USE_HW;
            for (std::size_t i = 0; i < breakpoints_.size(); ++i) {
                dbg.arch.dbg_bcr[i] = kBcrExec;
                dbg.arch.dbg_bvr[i] = breakpoints_[i];
            }
        }
    }
    if (checked_ioctl(fd_.get(), KVM_SET_GUEST_DEBUG, &dbg) < 0)
        throw BackendError(errno_text("KVM_SET_GUEST_DEBUG"));
}

void Vcpu::insert_breakpoint(GuestAddr addr) {
    if (std::find(breakpoints_.begin(), breakpoints_.end(), addr) != breakpoints_.end())
        return;
    if (breakpoints_.size() >= bp_slots_)
        throw ResourceError("no free hardware breakpoint for " + log::hex(addr) + " (host provides " +
                            std::to_string(bp_slots_) + " slots)");
    breakpoints_.push_back(addr);
    apply_debug(false);
}

void Vcpu::remove_breakpoint(GuestAddr addr) {
    auto it = std::find(breakpoints_.begin(), breakpoints_.end(), addr);
    if (it == breakpoints_.end())
        return;
    breakpoints_.erase(it);
    apply_debug(false);
}

void Vcpu::set_interrupt_pending(bool pending) {
    if (pending == irq_level_)
        return;
    kvm_irq_level irq{};
    irq.irq = (KVM_ARM_IRQ_TYPE_CPU << KVM_ARM_IRQ_TYPE_SHIFT) | ((index_ & 0xFF) << KVM_ARM_IRQ_VCPU_SHIFT) |
              KVM_ARM_IRQ_CPU_IRQ;
    irq.level = pending ? 1 : 0;
    if (checked_ioctl(vm_->fd(), KVM_IRQ_LINE, &irq) < 0)
        throw BackendError(errno_text("KVM_IRQ_LINE"));
    irq_level_ = pending;
}

void Vcpu::complete_mmio(const Transaction& response) {
    if (!mmio_pending_)
        throw ContractError("complete_mmio without a pending access");
    if (response.address != run_->mmio.phys_addr || response.is_write() != (run_->mmio.is_write != 0))
        throw ContractError("MMIO response does not match the pending access at " + log::hex(run_->mmio.phys_addr));
    mmio_pending_ = false;
    if (response.status != TransactionStatus::ok)
        log::warn("kvm vcpu " + std::to_string(index_) + ": access to " + log::hex(response.address) + " failed with " +
                  std::string(to_string(response.status)));
    // the access completes when KVM_RUN is re-entered
    if (response.is_read()) {
        std::memset(run_->mmio.data, 0, sizeof(run_->mmio.data));
        if (response.status == TransactionStatus::ok)
            std::memcpy(run_->mmio.data, response.data.data(), std::min<std::size_t>(run_->mmio.len, 8));
    }
}

BackendRunResult Vcpu::decode_exit() {
    switch (run_->exit_reason) {
    case KVM_EXIT_MMIO: {
        exit::Mmio m;
        m.address = run_->mmio.phys_addr;
        m.size = static_cast<std::uint8_t>(run_->mmio.len);
        m.kind = run_->mmio.is_write ? AccessKind::write : AccessKind::read;
        if (run_->mmio.is_write) {
            std::uint64_t v = 0;
            std::memcpy(&v, run_->mmio.data, std::min<std::size_t>(run_->mmio.len, 8));
            m.data = v;
        }
        if (!valid_access_size(m.size))
            return {exit::BackendFailure{"MMIO access of " + std::to_string(m.size) + " bytes"}, std::nullopt};
        mmio_pending_ = true;
        return {m, std::nullopt};
    }
    case KVM_EXIT_DEBUG:
        step_over_ = true;
        return {exit::Breakpoint{get_pc()}, std::nullopt};
    case KVM_EXIT_INTR:
        return {exit::Kicked{}, std::nullopt};
    case KVM_EXIT_SYSTEM_EVENT:
        return {exit::Halted{}, std::nullopt};
    case KVM_EXIT_FAIL_ENTRY:
        return {exit::BackendFailure{"entry failed, hardware reason " +
                                     std::to_string(run_->fail_entry.hardware_entry_failure_reason)},
                std::nullopt};
    case KVM_EXIT_INTERNAL_ERROR:
        return {exit::BackendFailure{"internal error, suberror " + std::to_string(run_->internal.suberror)},
                std::nullopt};
    default:
        return {exit::BackendFailure{"unhandled exit reason " + std::to_string(run_->exit_reason)}, std::nullopt};
    }
}

BackendRunResult Vcpu::run(std::optional<Cycles>) {
    if (mmio_pending_)
        throw ContractError("run() with an uncompleted MMIO access");

    sigset_t stop_set;
    sigemptyset(&stop_set);
    sigaddset(&stop_set, kStopSignal);
    ::pthread_sigmask(SIG_BLOCK, &stop_set, nullptr);
    // drop a signal aimed at an earlier run
    const timespec zero{0, 0};
    while (::sigtimedwait(&stop_set, nullptr, &zero) == kStopSignal) {
    }

    thread_ = ::pthread_self();
    for (;;) {
        const bool stepping = step_over_;
        if (stepping)
            apply_debug(true);
        in_run_.store(true, std::memory_order_release);
        if (stop_.load(std::memory_order_acquire))
            run_->immediate_exit = 1;
        const int r = ::ioctl(fd_.get(), KVM_RUN, 0);
        const int err = errno;
        in_run_.store(false, std::memory_order_release);

        if (stepping) {
            step_over_ = false;
            apply_debug(false);
            // the single step itself reports a debug exit; keep running
            if (r == 0 && run_->exit_reason == KVM_EXIT_DEBUG) {
                if (stop_.load(std::memory_order_acquire))
                    return {exit::Kicked{}, std::nullopt};
                continue;
            }
        }
        if (r < 0) {
            if (err == EINTR || err == EAGAIN)
                return {exit::Kicked{}, std::nullopt};
            errno = err;
            return {exit::BackendFailure{errno_text("KVM_RUN")}, std::nullopt};
        }
        return decode_exit();
    }
}

} // namespace

bool hardware_backend_compiled() { return true; }

std::string hardware_backend_unavailable_reason() {
    Fd kvm(::open("/dev/kvm", O_RDWR | O_CLOEXEC));
    if (kvm.get() < 0)
        return errno_text("cannot open /dev/kvm");
    const int version = ::ioctl(kvm.get(), KVM_GET_API_VERSION, 0);
    if (version != KVM_API_VERSION)
        return "unsupported KVM API version " + std::to_string(version);
    return {};
}

std::shared_ptr<KvmVm> KvmVm::create(const std::vector<GuestRegion>& regions) {
    if (auto why = hardware_backend_unavailable_reason(); !why.empty())
        throw CapabilityError(why);
    Fd kvm(::open("/dev/kvm", O_RDWR | O_CLOEXEC));
    Fd vm(checked_ioctl(kvm.get(), KVM_CREATE_VM, 0));
    if (vm.get() < 0)
        throw BackendError(errno_text("KVM_CREATE_VM"));
    auto out = std::make_shared<Vm>(std::move(kvm), std::move(vm));
    out->setup(regions);
    return out;
}

#endif

} // namespace kvmvp

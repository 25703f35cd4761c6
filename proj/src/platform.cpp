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

#include "kvmvp/platform.hpp"

#include "kvmvp/elf.hpp"
#include "kvmvp/errors.hpp"
#include "kvmvp/interpreter.hpp"
#include "kvmvp/log.hpp"
#include "kvmvp/wfi_annotator.hpp"

#include <algorithm>
#include <cstdio>
#include <charconv>
#include <chrono>
#include <cstring>
#include <filesystem>
#include <iostream>
#include <sstream>

namespace kvmvp {

std::string_view to_string(ExitCause c) {
    switch (c) {
    case ExitCause::halted:
        return "halted";
    case ExitCause::time_limit:
        return "time-limit";
    case ExitCause::instruction_limit:
        return "instruction-limit";
    case ExitCause::breakpoint:
        return "breakpoint";
    case ExitCause::deadlock:
        return "deadlock";
    case ExitCause::drained:
        return "drained";
    }
    return "?";
}

namespace {

std::string fmt_double(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return ec == std::errc{} ? std::string(buf, end) : std::to_string(v);
}

std::string fmt_ns(SimTime t) {
    const std::uint64_t ps = t.ticks();
    std::string out = std::to_string(ps / 1000);
    if (ps % 1000 != 0) {
        char frac[8];
        std::snprintf(frac, sizeof(frac), ".%03llu", static_cast<unsigned long long>(ps % 1000));
        out += frac;
        while (out.back() == '0')
            out.pop_back();
    }
    return out;
}

} // namespace

std::string csv_header(const RunMetrics& m) {
    return std::string("cores,quantum_ns,parallel,backend,wall_s,sim_s,") +
           (m.instructions_estimated ? "instructions_estimated" : "instructions") + ",mips,rtf,exit_cause";
}

std::string csv_row(const RunMetrics& m) {
    std::ostringstream row;
    row << m.cores << ',' << fmt_ns(m.quantum) << ',' << (m.parallel ? "on" : "off") << ',' << to_string(m.backend)
        << ',' << fmt_double(m.wall_s) << ',' << fmt_double(m.sim_s) << ',' << m.instructions << ','
        << fmt_double(m.mips) << ',' << fmt_double(m.rtf) << ',' << to_string(m.exit_cause);
    return row.str();
}

void emit_csv(const RunMetrics& m, const std::string& path, bool append) {
    const std::string header = csv_header(m);
    std::error_code ec;
    const bool existing = append && std::filesystem::exists(path, ec) && std::filesystem::file_size(path, ec) > 0;
    if (existing) {
        std::ifstream in(path);
        std::string first;
        std::getline(in, first);
        if (first != header)
            throw IoError("'" + path + "' has a different header: '" + first + "'");
    }
    std::ofstream out(path, existing ? std::ios::app : std::ios::trunc);
    if (!out)
        throw IoError("cannot write '" + path + "'");
    if (!existing)
        out << header << '\n';
    out << csv_row(m) << '\n';
    if (!out)
        throw IoError("failed writing '" + path + "'");
}

std::string summary(const RunMetrics& m) {
    auto g4 = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.4g", v);
        return std::string(buf);
    };
    std::ostringstream s;
    s << "cores=" << m.cores << " quantum=" << m.quantum.str() << " parallel=" << (m.parallel ? "on" : "off")
      << " backend=" << to_string(m.backend) << " sim=" << m.sim_time.str() << " wall=" << g4(m.wall_s)
      << "s instructions=" << m.instructions << (m.instructions_estimated ? " (estimated)" : "")
      << " mips=" << g4(m.mips) << " rtf=" << g4(m.rtf) << " exit=" << to_string(m.exit_cause);
    return s.str();
}

// construction

Platform::Platform(PlatformConfig cfg) : cfg_(std::move(cfg)) {
    validate(cfg_);
    bus_.set_context_probe([this] { return kernel_.on_coordinator(); });
    build_devices();
    SymbolTable symbols;
    GuestAddr entry = 0;
    load_images(symbols, entry);
    if (cfg_.watchdog_enabled())
        watchdog_ = std::make_unique<Watchdog>();
    build_cores(symbols, entry);
    if (cfg_.parallel)
        start_workers();
}

Platform::~Platform() {
    kernel_.shutdown();
    for (auto& c : cores_)
        c->backend().request_stop();
    stop_workers();
}

void Platform::build_devices() {
    for (const auto& d : cfg_.memory_map) {
        Target* target = nullptr;
        switch (d.type) {
        case DeviceType::ram:
            rams_.push_back({d.base, std::make_unique<Ram>(d.size, d.name)});
            target = rams_.back().ram.get();
            break;
        case DeviceType::irqctl:
            irqctl_ = std::make_unique<IrqController>(d.name);
            target = irqctl_.get();
            break;
        case DeviceType::uart:
            uart_ = std::make_unique<Uart>(d.name);
            target = uart_.get();
            break;
        case DeviceType::rtc:
            rtc_ = std::make_unique<Rtc>(kernel_, d.name);
            target = rtc_.get();
            break;
        case DeviceType::timer:
            break; // after the controller exists
        }
        if (target != nullptr)
            bus_.map_target(d.base, d.size, *target);
    }
    for (const auto& d : cfg_.memory_map) {
        if (d.type != DeviceType::timer)
            continue;
        if (!irqctl_)
            throw ConfigError("memory_map: timer '" + d.name + "' needs an irqctl");
        timers_.push_back(std::make_unique<Timer>(kernel_, *irqctl_, d.irq, d.name));
        bus_.map_target(d.base, d.size, *timers_.back());
    }
    if (uart_) {
        if (cfg_.uart_stdout) {
            uart_->add_sink([](char c) {
                std::cout.put(c);
                if (c == '\n')
                    std::cout.flush();
            });
        }
        if (cfg_.uart_capture) {
            uart_capture_.open(*cfg_.uart_capture, std::ios::binary | std::ios::trunc);
            if (!uart_capture_)
                throw IoError("cannot open UART capture '" + *cfg_.uart_capture + "'");
            uart_->add_sink([this](char c) {
                uart_capture_.put(c);
                uart_capture_.flush();
            });
        }
    }
}

Platform::RamRegion* Platform::ram_at(GuestAddr addr, std::uint64_t len) {
    for (auto& r : rams_)
        if (addr >= r.base && len <= r.ram->size() && addr - r.base <= r.ram->size() - len)
            return &r;
    return nullptr;
}

const Platform::RamRegion* Platform::ram_at(GuestAddr addr, std::uint64_t len) const {
    return const_cast<Platform*>(this)->ram_at(addr, len);
}

void Platform::load_images(SymbolTable& symbols, GuestAddr& default_entry) {
    auto place = [&](GuestAddr at, std::span<const std::byte> bytes, std::uint64_t mem_size, const std::string& what) {
        if (mem_size == 0)
            return;
        RamRegion* r = ram_at(at, mem_size);
        if (r == nullptr)
            throw ConfigError(what + ": [" + log::hex(at) + ", +" + log::hex(mem_size) + ") lies outside RAM");
        auto dst = r->ram->bytes().subspan(at - r->base, mem_size);
        std::memcpy(dst.data(), bytes.data(), bytes.size());
        std::fill(dst.begin() + static_cast<std::ptrdiff_t>(bytes.size()), dst.end(), std::byte{0});
    };

    for (std::size_t i = 0; i < cfg_.images.size(); ++i) {
        const ImageSpec& img = cfg_.images[i];
        const std::string what = "images[" + std::to_string(i) + "] '" + img.path + "'";
        const auto bytes = image_bytes(img);
        if (img.format == ImageFormat::flat) {
            place(*img.load_address, bytes, bytes.size(), what);
            if (i == 0)
                default_entry = *img.load_address;
            continue;
        }
        const ElfImage elf = parse_elf(bytes);
        for (const auto& seg : elf.segments)
            place(seg.paddr, std::span(bytes).subspan(seg.file_offset, seg.file_size), seg.mem_size, what);
        for (const auto& s : elf.symbols.symbols())
            symbols.add(s);
        if (i == 0)
            default_entry = elf.entry;
    }
}

void Platform::build_cores(const SymbolTable& symbols, GuestAddr default_entry) {
    if (cfg_.backend == BackendKind::hardware) {
        std::vector<GuestRegion> regions;
        for (auto& r : rams_)
            regions.push_back({*bus_.acquire_dmi(r.base, r.ram->size()), r.base});
        vm_ = KvmVm::create(regions);
    }

    std::optional<IdleAnnotation> annotation;
    for (CoreId i = 0; i < cfg_.cores; ++i) {
        GuestAddr entry = default_entry;
        if (!cfg_.entry_points.empty())
            entry = cfg_.entry_points.size() == 1 ? cfg_.entry_points.front() : cfg_.entry_points.at(i);

        std::unique_ptr<ExecBackend> backend;
        if (cfg_.backend == BackendKind::interpreter) {
            auto interp = std::make_unique<Interpreter>(InterpreterOptions{cfg_.wfi_annotation});
            for (auto& r : rams_)
                interp->map_guest_memory(*bus_.acquire_dmi(r.base, r.ram->size()), r.base);
            interp->set_pc(entry);
            backend = std::move(interp);
        } else {
            backend = vm_->create_vcpu(i, entry);
        }

        CoreOptions opts;
        opts.id = i;
        opts.clock_hz = cfg_.clock_for(i);
        opts.arm_watchdog = watchdog_ != nullptr;
        opts.irq_lines = IrqController::kLines;
        opts.trace_irqs = cfg_.trace_irqs;
        cores_.push_back(std::make_unique<Core>(opts, std::move(backend), kernel_, bus_, watchdog_.get()));
        if (irqctl_)
            irqctl_->connect(i, *cores_.back());

        if (cfg_.wfi_annotation && i == 0 && !symbols.empty()) {
            const auto sym = find_idle_symbol(symbols, cfg_.idle_symbol);
            const RamRegion* r = sym ? ram_at(sym->address, std::max<std::uint64_t>(sym->size, 1)) : nullptr;
            GuestMemoryView view;
            if (r != nullptr)
                view = GuestMemoryView{r->base, r->ram->bytes()};
            annotation = annotate_idle(symbols, view, cfg_.idle_symbol, cores_.back()->backend().wfi_pattern());
        }
        if (annotation)
            cores_.back()->set_idle_annotation(annotation);
    }
    slots_.resize(cores_.size());
}

void Platform::start_workers() {
    for (CoreId i = 0; i < cores_.size(); ++i) {
        workers_.push_back(std::make_unique<Worker>());
        cores_[i]->set_run_start_hook([this, i] {
            workers_[i]->started.store(true, std::memory_order_release);
            kernel_.notify();
        });
    }
    for (CoreId i = 0; i < cores_.size(); ++i)
        workers_[i]->thread = std::thread([this, i] { worker_loop(i); });
}

void Platform::stop_workers() noexcept {
    for (auto& w : workers_) {
        {
            std::lock_guard lock(w->mutex);
            w->quit = true;
        }
        w->cv.notify_all();
    }
    for (auto& w : workers_)
        if (w->thread.joinable())
            w->thread.join();
}

void Platform::worker_loop(CoreId id) {
    Worker& w = *workers_[id];
    for (;;) {
        Cycles budget = 0;
        {
            std::unique_lock lock(w.mutex);
            w.cv.wait(lock, [&] { return w.quit || w.job.has_value(); });
            if (w.quit)
                return;
            budget = *w.job;
            w.job.reset();
        }
        try {
            cores_[id]->simulate(budget);
            w.error = nullptr;
        } catch (...) {
            w.error = std::current_exception();
        }
        w.done.store(true, std::memory_order_release);
        kernel_.notify();
    }
}

// simulation

bool Platform::all_finished() const {
    return std::all_of(slots_.begin(), slots_.end(), [](const CoreSlot& s) { return s.finished; });
}

void Platform::activate(CoreId id) {
    Core& core = *cores_[id];
    CoreSlot& slot = slots_[id];
    const SimTime now = kernel_.now();
    if (slot.finished)
        return;
    if (core.state() == CoreState::halted ||
        (cfg_.max_instructions && core.instruction_counter() >= *cfg_.max_instructions)) {
        slot.finished = true;
        if (all_finished())
            kernel_.request_stop();
        return;
    }
    if (cfg_.max_sim_time && now >= *cfg_.max_sim_time)
        return;
    if (core.state() == CoreState::idle) {
        // a pending interrupt completes the WFI at once
        if (!core.has_pending_irq()) {
            slot.suspended = true;
            slot.suspend_mark = core.instruction_counter();
            ++slot.suspensions;
            kernel_.suspend_until_interrupt(id, std::nullopt, [this, id](IrqLine) { on_resume(id); });
            return;
        }
        core.resume();
    }

    core.sync_to(now);
    Cycles budget = std::max<Cycles>(1, time_to_cycles(cfg_.quantum, core.clock_hz()));
    if (cfg_.max_sim_time) {
        budget = std::min(budget, time_to_cycles(*cfg_.max_sim_time - now, core.clock_hz()));
        if (budget == 0)
            return;
    }
    if (cfg_.max_instructions)
        budget = std::min(budget, *cfg_.max_instructions - core.instruction_counter());
    dispatch(id, budget);
}

void Platform::dispatch(CoreId id, Cycles budget) {
    if (workers_.empty()) {
        try {
            cores_[id]->simulate(budget);
        } catch (...) {
            slots_[id].error = std::current_exception();
        }
        kernel_.track([] { return true; }, [this, id] { return after_run(id); }, [this, id] { activate(id); });
        return;
    }

    Worker& w = *workers_[id];
    {
        std::lock_guard lock(w.mutex);
        w.started.store(false, std::memory_order_relaxed);
        w.done.store(false, std::memory_order_relaxed);
        w.job = budget;
    }
    w.cv.notify_one();
    // hold the event loop until the backend has sampled interrupts and
    // started, so devices see the same order as in sequential mode
    kernel_.wait_until([&w] { return w.started.load(std::memory_order_acquire) || w.done.load(std::memory_order_acquire); });
    kernel_.track([&w] { return w.done.load(std::memory_order_acquire); },
                  [this, id, &w] {
                      slots_[id].error = w.error;
                      return after_run(id);
                  },
                  [this, id] { activate(id); });
}

std::optional<SimTime> Platform::after_run(CoreId id) {
    CoreSlot& slot = slots_[id];
    if (slot.error)
        std::rethrow_exception(std::exchange(slot.error, nullptr));
    Core& core = *cores_[id];
    if (core.state() == CoreState::breakpoint_stop) {
        breakpoint_hit_ = true;
        kernel_.request_stop();
        return std::nullopt;
    }
    return core.current_time();
}

void Platform::on_resume(CoreId id) {
    CoreSlot& slot = slots_[id];
    Core& core = *cores_[id];
    slot.suspended = false;
    slot.idle_effort += core.instruction_counter() - slot.suspend_mark;
    core.resume();
    activate(id);
}

RunMetrics Platform::run() {
    if (ran_)
        throw ContractError("Platform::run() may be called once");
    ran_ = true;

    RunMetrics m;
    m.cores = cfg_.cores;
    m.quantum = cfg_.quantum;
    m.parallel = cfg_.parallel;
    m.backend = cfg_.backend;
    m.instructions_estimated =
        std::any_of(cores_.begin(), cores_.end(), [](const auto& c) { return !c->backend().exact_counts(); });

    bool deadlock = false;
    const bool zero_limit = (cfg_.max_sim_time && *cfg_.max_sim_time == SimTime::zero()) ||
                            (cfg_.max_instructions && *cfg_.max_instructions == 0);
    const auto start = std::chrono::steady_clock::now();
    if (!zero_limit) {
        for (CoreId i = 0; i < cores_.size(); ++i)
            kernel_.schedule(kernel_.now(), [this, i] { activate(i); });
        try {
            kernel_.run_until(cfg_.max_sim_time.value_or(SimTime::max()));
        } catch (const DeadlockError& e) {
            deadlock = true;
            log::info(e.what());
        } catch (...) {
            kernel_.shutdown();
            for (auto& c : cores_)
                c->backend().request_stop();
            stop_workers();
            throw;
        }
    }
    // a stop can leave other cores mid-run; let them finish before reading counters
    if (!workers_.empty()) {
        kernel_.wait_until([this] {
            return std::all_of(workers_.begin(), workers_.end(),
                               [](const auto& w) { return w->done.load(std::memory_order_acquire); });
        });
    }
    const auto wall = std::chrono::steady_clock::now() - start;

    m.wall_s = std::chrono::duration<double>(wall).count();
    m.sim_time = kernel_.now();
    m.sim_s = m.sim_time.seconds();
    for (CoreId i = 0; i < cores_.size(); ++i) {
        const Core& c = *cores_[i];
        CoreMetrics cm;
        cm.id = i;
        cm.instructions = c.instruction_counter();
        cm.state = std::string(to_string(c.state()));
        if (slots_[i].suspended)
            cm.state = "suspended";
        cm.stats = c.stats();
        cm.suspensions = slots_[i].suspensions;
        cm.idle_effort = slots_[i].idle_effort;
        cm.local_time = c.current_time();
        m.instructions += cm.instructions;
        m.per_core.push_back(std::move(cm));
    }
    if (m.wall_s > 0) {
        m.mips = static_cast<double>(m.instructions) / m.wall_s / 1e6;
        m.rtf = m.sim_s / m.wall_s;
    }

    const bool all_halted =
        std::all_of(cores_.begin(), cores_.end(), [](const auto& c) { return c->state() == CoreState::halted; });
    if (zero_limit)
        m.exit_cause = cfg_.max_sim_time && *cfg_.max_sim_time == SimTime::zero() ? ExitCause::time_limit
                                                                                    : ExitCause::instruction_limit;
    else if (breakpoint_hit_)
        m.exit_cause = ExitCause::breakpoint;
    else if (deadlock)
        m.exit_cause = ExitCause::deadlock;
    else if (all_finished())
        m.exit_cause = all_halted ? ExitCause::halted : ExitCause::instruction_limit;
    else if (cfg_.max_sim_time && kernel_.now() >= *cfg_.max_sim_time)
        m.exit_cause = ExitCause::time_limit;
    else
        m.exit_cause = ExitCause::drained;
    return m;
}

std::uint32_t Platform::read_ram32(GuestAddr addr) const {
    const RamRegion* r = ram_at(addr, 4);
    if (r == nullptr)
        throw ContractError("no RAM at " + log::hex(addr));
    std::uint32_t v = 0;
    std::memcpy(&v, r->ram->bytes().data() + (addr - r->base), 4);
    return v;
}

std::uint64_t Platform::ram_digest() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& r : rams_) {
        h ^= r.ram->digest();
        h *= 0x100000001b3ULL;
    }
    return h;
}

RunMetrics run_platform(const PlatformConfig& cfg) {
    Platform p(cfg);
    RunMetrics m = p.run();
    if (cfg.csv)
        emit_csv(m, *cfg.csv, cfg.csv_append);
    return m;
}

} // namespace kvmvp

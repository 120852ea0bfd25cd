#include "mfstop/diagnostics.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace mfstop {
namespace {

std::mutex& sink_mutex() {
    static std::mutex m;
    return m;
}

WarningSink& sink_slot() {
    static WarningSink sink = [](std::string_view msg) {
        std::cerr << "warning: " << msg << '\n';
    };
    return sink;
}

std::atomic<std::size_t> g_warnings{0};

}  // namespace

WarningSink set_warning_sink(WarningSink sink) {
    std::lock_guard lock(sink_mutex());
    WarningSink old = std::move(sink_slot());
    sink_slot() = std::move(sink);
    return old;
}

void warn(std::string_view message) {
    g_warnings.fetch_add(1, std::memory_order_relaxed);
    std::lock_guard lock(sink_mutex());
    if (sink_slot()) sink_slot()(message);
}

std::size_t warning_count() noexcept { return g_warnings.load(std::memory_order_relaxed); }

}  // namespace mfstop

#include "mfstop/parallel.hpp"

#include <atomic>

namespace mfstop {
namespace {

std::atomic<std::size_t> g_threads{1};

}  // namespace

std::size_t default_threads() noexcept { return g_threads.load(std::memory_order_relaxed); }

void set_default_threads(std::size_t n) noexcept {
    g_threads.store(n == 0 ? std::max<unsigned>(1, std::thread::hardware_concurrency()) : n,
                    std::memory_order_relaxed);
}

}  // namespace mfstop

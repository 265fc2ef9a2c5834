#include "mtseg/layers.hpp"

namespace mtseg {

namespace {
std::atomic<int> g_batch_threads{1};
}

void set_batch_threads(int threads) {
    g_batch_threads.store(threads < 1 ? 1 : threads, std::memory_order_relaxed);
}

int batch_threads() { return g_batch_threads.load(std::memory_order_relaxed); }

}  // namespace mtseg

#pragma once

#include <atomic>
#include <cstddef>
#include <memory>

namespace llpack::memory {

// Engine-wide allocation accounting. The bench module reports peak tracked
// bytes instead of OS RSS, so every Tensor buffer must route through this
// allocator.
inline std::atomic<std::size_t>& current_counter() {
    static std::atomic<std::size_t> c{0};
    return c;
}

inline std::atomic<std::size_t>& peak_counter() {
    static std::atomic<std::size_t> p{0};
    return p;
}

inline void on_alloc(std::size_t bytes) {
    const std::size_t now = current_counter().fetch_add(bytes) + bytes;
    std::size_t prev = peak_counter().load();
    while (prev < now && !peak_counter().compare_exchange_weak(prev, now)) {
    }
}

inline void on_free(std::size_t bytes) { current_counter().fetch_sub(bytes); }

inline std::size_t current_bytes() { return current_counter().load(); }
inline std::size_t peak_bytes() { return peak_counter().load(); }

// Restart the peak watermark from the current live total.
inline void reset_peak() { peak_counter().store(current_counter().load()); }

template <typename T>
struct TrackingAllocator {
    using value_type = T;

    TrackingAllocator() = default;
    template <typename U>
    TrackingAllocator(const TrackingAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) {
        on_alloc(n * sizeof(T));
        return std::allocator<T>{}.allocate(n);
    }
    void deallocate(T* p, std::size_t n) noexcept {
        on_free(n * sizeof(T));
        std::allocator<T>{}.deallocate(p, n);
    }

    template <typename U>
    bool operator==(const TrackingAllocator<U>&) const noexcept {
        return true;
    }
};

}  // namespace llpack::memory

//! Allocator tuning for long training runs.
//!
//! Every training step builds a fresh tape whose buffers run to megabytes.
//! glibc serves those with `mmap` and hands them back on free, so each step
//! pays a page fault per 4 KiB touched. Raising the thresholds keeps the
//! memory in the heap between steps.

#[cfg(all(target_os = "linux", target_env = "gnu"))]
pub fn retain_large_allocations() {
    const M_TRIM_THRESHOLD: i32 = -1;
    const M_TOP_PAD: i32 = -2;
    const M_MMAP_THRESHOLD: i32 = -3;
    extern "C" {
        fn mallopt(param: i32, value: i32) -> i32;
    }
    // SAFETY: mallopt only adjusts allocator parameters; it is thread-safe in
    // glibc and these values are within the documented ranges.
    unsafe {
        mallopt(M_MMAP_THRESHOLD, 512 << 20);
        mallopt(M_TRIM_THRESHOLD, i32::MAX);
        mallopt(M_TOP_PAD, 64 << 20);
    }
}

/// No-op where the system allocator is not glibc.
#[cfg(not(all(target_os = "linux", target_env = "gnu")))]
pub fn retain_large_allocations() {}

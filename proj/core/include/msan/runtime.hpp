#pragma once

namespace msan {

/// Keeps freed training buffers inside the process heap. Every step
/// allocates and frees activation buffers of a few hundred KB, which glibc
/// would otherwise hand back to the kernel each time. No-op off glibc.
/// Call once at program start.
void tune_allocator();

}  // namespace msan

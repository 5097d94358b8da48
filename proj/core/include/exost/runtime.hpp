#pragma once

namespace exost {

/// Keeps freed tape buffers in the heap instead of returning them to the OS
/// after every step. Training allocates and drops many large vectors per
/// batch; without this the page-fault cost rivals the arithmetic. No-op off
/// glibc.
void configure_allocator();

}  // namespace exost

#pragma once

namespace clarifyir {

// Selects the OpenMP kernel or the serial reference loop it is tested
// against. Both produce identical results.
enum class Execution { kSerial, kParallel };

// Threads OpenMP would use for a parallel region; 1 without OpenMP.
int max_threads();

}  // namespace clarifyir

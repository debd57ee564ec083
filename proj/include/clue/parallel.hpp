#pragma once

namespace clue {

// Kernel selection. `serial` is the reference path kept for tests and
// benchmarks; both paths produce bitwise-identical results.
enum class Exec { serial, parallel };

int max_threads();

}  // namespace clue

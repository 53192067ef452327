#pragma once

namespace treeseg {

/// Selects between the OpenMP kernel and its serial reference.  Both paths
/// must produce bit-identical results; the serial one exists for testing and
/// benchmarking.
enum class Exec { serial, parallel };

} // namespace treeseg

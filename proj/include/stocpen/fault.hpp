#pragma once

namespace stocpen::fault {

// Planted-failure hooks for the verify suite. Compiled to constants when
// STOCPEN_FAULT_INJECTION is off, so release binaries carry no switches.
#ifdef STOCPEN_FAULT_INJECTION
extern double truncation_radius_scale;   // default 1.0
extern bool flip_step_condition;         // default false

inline double trunc_scale() { return truncation_radius_scale; }
inline bool step_condition_flipped() { return flip_step_condition; }
inline void reset() {
  truncation_radius_scale = 1.0;
  flip_step_condition = false;
}
#else
inline double trunc_scale() { return 1.0; }
inline bool step_condition_flipped() { return false; }
inline void reset() {}
#endif

}  // namespace stocpen::fault

#include "stocpen/fault.hpp"

#ifdef STOCPEN_FAULT_INJECTION
namespace stocpen::fault {
double truncation_radius_scale = 1.0;
bool flip_step_condition = false;
}  // namespace stocpen::fault
#endif

#pragma once

namespace bwm::phys {

// CODATA 2018 values; defaults only, the math core takes them as inputs.
inline constexpr double electron_mass_kg = 9.1093837015e-31;
inline constexpr double hbar_Js = 1.054571817e-34;
inline constexpr double pi = 3.14159265358979323846264338327950288;
inline constexpr double planck_Js = 2.0 * pi * hbar_Js;

}  // namespace bwm::phys

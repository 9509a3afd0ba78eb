#pragma once

// Physical constants of the classic-control tasks, as published with the
// reference control suite.

#include <numbers>

namespace nkcme::rl::params {

namespace cartpole {
inline constexpr double gravity = 9.8;
inline constexpr double mass_cart = 1.0;
inline constexpr double mass_pole = 0.1;
inline constexpr double total_mass = mass_cart + mass_pole;
inline constexpr double half_length = 0.5;
inline constexpr double pole_mass_length = mass_pole * half_length;
inline constexpr double force = 10.0;
inline constexpr double tau = 0.02;  // explicit Euler step
inline constexpr double theta_limit = 12.0 * 2.0 * std::numbers::pi / 360.0;
inline constexpr double x_limit = 2.4;
inline constexpr double init_range = 0.05;
inline constexpr int max_steps = 500;
}  // namespace cartpole

namespace acrobot {
inline constexpr double dt = 0.2;  // one RK4 step
inline constexpr double link_length_1 = 1.0;
inline constexpr double link_mass_1 = 1.0;
inline constexpr double link_mass_2 = 1.0;
inline constexpr double link_com_1 = 0.5;
inline constexpr double link_com_2 = 0.5;
inline constexpr double link_moi = 1.0;
inline constexpr double gravity = 9.8;
inline constexpr double max_vel_1 = 4.0 * std::numbers::pi;
inline constexpr double max_vel_2 = 9.0 * std::numbers::pi;
inline constexpr double torques[3] = {-1.0, 0.0, 1.0};
inline constexpr double init_range = 0.1;
inline constexpr int max_steps = 500;
}  // namespace acrobot

namespace mountaincar {
inline constexpr double min_position = -1.2;
inline constexpr double max_position = 0.6;
inline constexpr double max_speed = 0.07;
inline constexpr double goal_position = 0.5;
inline constexpr double goal_velocity = 0.0;
inline constexpr double force = 0.001;
inline constexpr double gravity = 0.0025;
inline constexpr double init_low = -0.6;
inline constexpr double init_high = -0.4;
inline constexpr int max_steps = 200;
}  // namespace mountaincar

}  // namespace nkcme::rl::params

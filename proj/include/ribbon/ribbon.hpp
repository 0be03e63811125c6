#pragma once

#include "ribbon/quadrature.hpp"
#include "ribbon/mesh_fe.hpp"
#include "ribbon/frame_state.hpp"
#include "ribbon/energy.hpp"
#include "ribbon/frames.hpp"
#include "ribbon/linear_solver.hpp"
#include "ribbon/gradient_flow.hpp"
#include "ribbon/io.hpp"
#include "ribbon/commands.hpp"
#include "ribbon/properties.hpp"

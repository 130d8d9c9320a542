#pragma once

#include "reid/adam.hpp"
#include "reid/commands.hpp"
#include "reid/data.hpp"
#include "reid/eval.hpp"
#include "reid/geometry.hpp"
#include "reid/losses.hpp"
#include "reid/matrix.hpp"
#include "reid/network.hpp"
#include "reid/rng.hpp"
#include "reid/sampler.hpp"
#include "reid/trainer.hpp"

#pragma once

#include "agent.hpp"
#include "config.hpp"
#include "conv.hpp"
#include "error.hpp"
#include "experiment.hpp"
#include "gradient_check.hpp"
#include "io.hpp"
#include "network.hpp"
#include "optimizer.hpp"
#include "random.hpp"
#include "render/gif.hpp"
#include "render/image.hpp"
#include "render/plot.hpp"
#include "render/png.hpp"
#include "tensor.hpp"
#include "world.hpp"

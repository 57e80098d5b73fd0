#pragma once

#include "zsparse/attention.hpp"
#include "zsparse/bench.hpp"
#include "zsparse/config.hpp"
#include "zsparse/encoder.hpp"
#include "zsparse/error.hpp"
#include "zsparse/grid.hpp"
#include "zsparse/image.hpp"
#include "zsparse/mlp.hpp"
#include "zsparse/rng.hpp"
#include "zsparse/saliency.hpp"
#include "zsparse/stripesort.hpp"
#include "zsparse/tensor.hpp"
#include "zsparse/tensor_io.hpp"

#pragma once

#include "obsr/nn/layers.hpp"
#include "obsr/nn/recurrent.hpp"
#include "obsr/nn/tensor.hpp"

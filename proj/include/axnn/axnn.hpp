#pragma once

#include "axnn/analog.hpp"
#include "axnn/autograd.hpp"
#include "axnn/checkpoint_io.hpp"
#include "axnn/common.hpp"
#include "axnn/config.hpp"
#include "axnn/data.hpp"
#include "axnn/error_inject.hpp"
#include "axnn/model.hpp"
#include "axnn/mult.hpp"
#include "axnn/nn.hpp"
#include "axnn/optim.hpp"
#include "axnn/proxy_act.hpp"
#include "axnn/sc.hpp"
#include "axnn/tensor.hpp"
#include "axnn/trainer.hpp"

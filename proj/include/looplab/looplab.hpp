// Copyright (c) 2026, The looplab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "looplab/autodiff/gradcheck.hpp"
#include "looplab/autodiff/ops.hpp"
#include "looplab/depth_sampling.hpp"
#include "looplab/dynamics.hpp"
#include "looplab/fit/scaling_laws.hpp"
#include "looplab/flops.hpp"
#include "looplab/io/checkpoint.hpp"
#include "looplab/io/config.hpp"
#include "looplab/io/corpus.hpp"
#include "looplab/io/jsonl.hpp"
#include "looplab/model.hpp"
#include "looplab/optim.hpp"
#include "looplab/rng.hpp"
#include "looplab/trainer.hpp"

namespace looplab {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace looplab

#pragma once

#include "llpack/amplifier.hpp"
#include "llpack/bench.hpp"
#include "llpack/common.hpp"
#include "llpack/dataio.hpp"
#include "llpack/model.hpp"
#include "llpack/nnops.hpp"
#include "llpack/objective.hpp"
#include "llpack/rearrange.hpp"
#include "llpack/rng.hpp"
#include "llpack/tape.hpp"
#include "llpack/tensor.hpp"
#include "llpack/threads.hpp"
#include "llpack/trainer.hpp"
#include "llpack/weights.hpp"

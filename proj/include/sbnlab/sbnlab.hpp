#pragma once

#include "sbnlab/checkpoint.hpp"
#include "sbnlab/config.hpp"
#include "sbnlab/data.hpp"
#include "sbnlab/digits.hpp"
#include "sbnlab/errors.hpp"
#include "sbnlab/eval.hpp"
#include "sbnlab/network.hpp"
#include "sbnlab/rng.hpp"
#include "sbnlab/sbn.hpp"
#include "sbnlab/sbn_approx.hpp"
#include "sbnlab/stats.hpp"
#include "sbnlab/tensor.hpp"
#include "sbnlab/train.hpp"

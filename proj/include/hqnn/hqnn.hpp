#pragma once

#include "hqnn/errors.hpp"
#include "hqnn/random.hpp"
#include "hqnn/qsim.hpp"
#include "hqnn/archspace.hpp"
#include "hqnn/hybridnet.hpp"
#include "hqnn/data.hpp"
#include "hqnn/metrics.hpp"
#include "hqnn/trainer.hpp"
#include "hqnn/nas.hpp"
#include "hqnn/experiments.hpp"

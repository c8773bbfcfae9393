#pragma once

#include "ccs/ablation.hpp"
#include "ccs/config.hpp"
#include "ccs/corpus.hpp"
#include "ccs/decoder.hpp"
#include "ccs/encoder.hpp"
#include "ccs/errors.hpp"
#include "ccs/experiment.hpp"
#include "ccs/generate.hpp"
#include "ccs/gradcheck.hpp"
#include "ccs/gradsuite.hpp"
#include "ccs/losses.hpp"
#include "ccs/metrics.hpp"
#include "ccs/model.hpp"
#include "ccs/nn.hpp"
#include "ccs/optim.hpp"
#include "ccs/rng.hpp"
#include "ccs/search.hpp"
#include "ccs/tensor.hpp"
#include "ccs/trainer.hpp"

#pragma once

#include "debias/analysis.hpp"
#include "debias/common.hpp"
#include "debias/corpus.hpp"
#include "debias/corrupt.hpp"
#include "debias/csv.hpp"
#include "debias/model.hpp"
#include "debias/rng.hpp"
#include "debias/select.hpp"
#include "debias/selftrain.hpp"
#include "debias/synthetic.hpp"
#include "debias/weaklabel.hpp"

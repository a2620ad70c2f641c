#pragma once

#include "peqfit/digitize.hpp"
#include "peqfit/dual.hpp"
#include "peqfit/errors.hpp"
#include "peqfit/eval_harness.hpp"
#include "peqfit/fdn_verify.hpp"
#include "peqfit/io.hpp"
#include "peqfit/optimizer.hpp"
#include "peqfit/peq_model.hpp"
#include "peqfit/prototypes.hpp"
#include "peqfit/target_curves.hpp"

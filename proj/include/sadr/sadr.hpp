#pragma once

#include "sadr/design.hpp"
#include "sadr/evaluate.hpp"
#include "sadr/family.hpp"
#include "sadr/fit.hpp"
#include "sadr/linalg.hpp"
#include "sadr/log.hpp"
#include "sadr/model.hpp"
#include "sadr/optimize.hpp"
#include "sadr/prior.hpp"
#include "sadr/rng.hpp"
#include "sadr/robust.hpp"
#include "sadr/vi.hpp"

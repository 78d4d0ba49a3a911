#pragma once

#include "wavemem/analysis.hpp"
#include "wavemem/hds.hpp"
#include "wavemem/io.hpp"
#include "wavemem/lbc.hpp"
#include "wavemem/numerics.hpp"
#include "wavemem/rng.hpp"
#include "wavemem/rnn.hpp"
#include "wavemem/tasks.hpp"
#include "wavemem/twm.hpp"

#pragma once

#include "ccrc/core.hpp"
#include "ccrc/spikes.hpp"
#include "ccrc/encoding.hpp"
#include "ccrc/substrate.hpp"
#include "ccrc/diagnostics.hpp"
#include "ccrc/latent.hpp"
#include "ccrc/readout.hpp"
#include "ccrc/control.hpp"
#include "ccrc/protocol.hpp"
#include "ccrc/transplant.hpp"
#include "ccrc/model_io.hpp"
#include "ccrc/harness.hpp"

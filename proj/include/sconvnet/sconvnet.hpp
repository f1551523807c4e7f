#pragma once

#include "sconvnet/config.hpp"
#include "sconvnet/cv.hpp"
#include "sconvnet/dataio.hpp"
#include "sconvnet/dsp.hpp"
#include "sconvnet/imaging.hpp"
#include "sconvnet/models.hpp"
#include "sconvnet/network.hpp"
#include "sconvnet/optim.hpp"
#include "sconvnet/report.hpp"

/**
 * @file fmf.hpp
 * @brief Umbrella header for the feature-map filtering library.
 */
#pragma once

#include "fmf/calibrate.hpp"
#include "fmf/config.hpp"
#include "fmf/descriptor.hpp"
#include "fmf/fileio.hpp"
#include "fmf/image_io.hpp"
#include "fmf/layers.hpp"
#include "fmf/netio.hpp"
#include "fmf/network.hpp"
#include "fmf/pipeline.hpp"
#include "fmf/recognize.hpp"
#include "fmf/rng.hpp"
#include "fmf/synthetic.hpp"
#include "fmf/tensor.hpp"
#include "fmf/traverse.hpp"
#include "fmf/triplet.hpp"

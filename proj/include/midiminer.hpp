// Umbrella header.

#pragma once

#include "midiminer/classifier.hpp"
#include "midiminer/config.hpp"
#include "midiminer/error.hpp"
#include "midiminer/features.hpp"
#include "midiminer/file_io.hpp"
#include "midiminer/forest.hpp"
#include "midiminer/midi_io.hpp"
#include "midiminer/pipeline.hpp"
#include "midiminer/spiral.hpp"
#include "midiminer/synthetic.hpp"
#include "midiminer/tension.hpp"
#include "midiminer/tonal.hpp"

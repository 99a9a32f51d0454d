#pragma once

// Everything, including the networking pieces (link cops_net).
#include "cops/bundle.hpp"
#include "cops/config.hpp"
#include "cops/detect.hpp"
#include "cops/generate.hpp"
#include "cops/gridsearch.hpp"
#include "cops/setups.hpp"
#include "cops/service.hpp"
#include "cops/urlnet.hpp"

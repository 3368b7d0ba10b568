#pragma once

#include "groupreg/eval.hpp"
#include "groupreg/features.hpp"
#include "groupreg/geometry.hpp"
#include "groupreg/graph.hpp"
#include "groupreg/groupwise.hpp"
#include "groupreg/guided.hpp"
#include "groupreg/hough.hpp"
#include "groupreg/image.hpp"
#include "groupreg/pipeline.hpp"
#include "groupreg/pso.hpp"
#include "groupreg/synthetic.hpp"

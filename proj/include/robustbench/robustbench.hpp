#ifndef ROBUSTBENCH_ROBUSTBENCH_HPP
#define ROBUSTBENCH_ROBUSTBENCH_HPP

#include "robustbench/analysis.hpp"
#include "robustbench/clustering.hpp"
#include "robustbench/common.hpp"
#include "robustbench/dataset.hpp"
#include "robustbench/image.hpp"
#include "robustbench/io.hpp"
#include "robustbench/neighbors.hpp"
#include "robustbench/pipeline.hpp"
#include "robustbench/probing.hpp"
#include "robustbench/robustify/combat.hpp"
#include "robustbench/robustify/dann.hpp"
#include "robustbench/robustify/reinhard.hpp"
#include "robustbench/robustness.hpp"
#include "robustbench/splits.hpp"
#include "robustbench/stats.hpp"
#include "robustbench/synth.hpp"

#endif

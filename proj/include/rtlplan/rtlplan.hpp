#pragma once

#include "automaton.hpp"
#include "dslib.hpp"
#include "formula.hpp"
#include "graph.hpp"
#include "hoa.hpp"
#include "monitor.hpp"
#include "motion.hpp"
#include "protocol.hpp"
#include "qp.hpp"
#include "scenario.hpp"
#include "service.hpp"
#include "sim.hpp"
#include "taskplanner.hpp"
#include "trace_io.hpp"

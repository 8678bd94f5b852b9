#pragma once

#include "pnmtrem/constraint.hpp"
#include "pnmtrem/empirical_bayes.hpp"
#include "pnmtrem/error.hpp"
#include "pnmtrem/fitter.hpp"
#include "pnmtrem/glm.hpp"
#include "pnmtrem/likelihood.hpp"
#include "pnmtrem/numeric.hpp"
#include "pnmtrem/panel.hpp"
#include "pnmtrem/parallel.hpp"
#include "pnmtrem/params.hpp"
#include "pnmtrem/simulator.hpp"

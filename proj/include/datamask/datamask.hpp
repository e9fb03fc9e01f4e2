#pragma once

#include "datamask/analysis.hpp"
#include "datamask/baselines.hpp"
#include "datamask/corpus.hpp"
#include "datamask/masklearn.hpp"
#include "datamask/metrics.hpp"
#include "datamask/synthetic.hpp"

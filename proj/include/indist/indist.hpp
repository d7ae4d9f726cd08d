#pragma once

// Convenience include for the whole toolkit.

#include "indist/boosting.hpp"
#include "indist/covariance.hpp"
#include "indist/dataset.hpp"
#include "indist/errors.hpp"
#include "indist/expertise.hpp"
#include "indist/metrics.hpp"
#include "indist/parallel.hpp"
#include "indist/partition_learn.hpp"
#include "indist/pipeline.hpp"
#include "indist/report_io.hpp"
#include "indist/rng.hpp"
#include "indist/robustness.hpp"
#include "indist/synth.hpp"

#pragma once

#include "explirec/data_ingest.hpp"
#include "explirec/date.hpp"
#include "explirec/error.hpp"
#include "explirec/evaluation.hpp"
#include "explirec/lexical_resources.hpp"
#include "explirec/metrics.hpp"
#include "explirec/pair_extraction.hpp"
#include "explirec/rating_models.hpp"
#include "explirec/recommender.hpp"

#pragma once

#include "explirec/models/checkpoint.hpp"
#include "explirec/models/factor_model.hpp"
#include "explirec/models/knn.hpp"
#include "explirec/models/nmf.hpp"
#include "explirec/models/sgd_factorization.hpp"
#include "explirec/models/train_config.hpp"

#pragma once

#include "painfc/learners/cv.hpp"
#include "painfc/learners/folds.hpp"
#include "painfc/learners/logistic.hpp"
#include "painfc/learners/model.hpp"
#include "painfc/learners/spec.hpp"
#include "painfc/learners/tree.hpp"

#pragma once

#include "last/data.hpp"
#include "last/greedy.hpp"
#include "last/harness.hpp"
#include "last/learners.hpp"
#include "last/numerics.hpp"
#include "last/param_teachers.hpp"
#include "last/rng.hpp"
#include "last/suites.hpp"
#include "last/tape.hpp"
#include "last/teacher_net.hpp"

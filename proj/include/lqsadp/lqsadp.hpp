#ifndef LQSADP_LQSADP_HPP
#define LQSADP_LQSADP_HPP

#include "lqsadp/errors.hpp"
#include "lqsadp/matstack.hpp"
#include "lqsadp/stability.hpp"
#include "lqsadp/report.hpp"
#include "lqsadp/model_pi.hpp"
#include "lqsadp/datagen.hpp"
#include "lqsadp/adp.hpp"
#include "lqsadp/io.hpp"

#endif  // LQSADP_LQSADP_HPP

/*
 * lmcrf - Gaussian CRF landmark inference with a 3D deformable shape model.
 *
 * File: include/lmcrf/lmcrf.hpp
 *
 * Copyright 2026 The lmcrf Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#ifndef LMCRF_LMCRF_HPP
#define LMCRF_LMCRF_HPP

#include "lmcrf/cholesky.hpp"
#include "lmcrf/crf.hpp"
#include "lmcrf/error.hpp"
#include "lmcrf/eval.hpp"
#include "lmcrf/fitting.hpp"
#include "lmcrf/inference.hpp"
#include "lmcrf/model.hpp"
#include "lmcrf/sample.hpp"
#include "lmcrf/training.hpp"
#include "lmcrf/unary.hpp"

#endif // LMCRF_LMCRF_HPP

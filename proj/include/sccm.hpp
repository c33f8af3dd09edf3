/*
 * Copyright 2026 The SCCM Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef SCCM_SCCM_HPP
#define SCCM_SCCM_HPP

// Convenience header: the whole library.

#include "sccm/core.hpp"
#include "sccm/embed.hpp"
#include "sccm/loss.hpp"
#include "sccm/spl.hpp"
#include "sccm/eval.hpp"
#include "sccm/data.hpp"
#include "sccm/trainer.hpp"
#include "sccm/checkpoint.hpp"
#include "sccm/gradcheck.hpp"

#endif  // SCCM_SCCM_HPP

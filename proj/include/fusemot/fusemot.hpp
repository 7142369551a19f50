/*
 * Copyright 2026 The Fusemot Authors. All rights reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Umbrella header: the whole library.

#include "fusemot/core.hpp"
#include "fusemot/geometry.hpp"
#include "fusemot/association.hpp"
#include "fusemot/fusion.hpp"
#include "fusemot/motion.hpp"
#include "fusemot/dataio.hpp"
#include "fusemot/tracker.hpp"
#include "fusemot/evalharness.hpp"

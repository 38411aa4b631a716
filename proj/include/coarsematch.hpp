// Copyright 2026 The coarsematch Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "coarsematch/assignment.hpp"
#include "coarsematch/bounds.hpp"
#include "coarsematch/clustering.hpp"
#include "coarsematch/error.hpp"
#include "coarsematch/experiment.hpp"
#include "coarsematch/instance.hpp"
#include "coarsematch/instance_io.hpp"
#include "coarsematch/io.hpp"
#include "coarsematch/kmeans.hpp"
#include "coarsematch/lp.hpp"
#include "coarsematch/matrix.hpp"
#include "coarsematch/metrics.hpp"
#include "coarsematch/policies.hpp"
#include "coarsematch/random.hpp"
#include "coarsematch/status_quo.hpp"
#include "coarsematch/synth.hpp"

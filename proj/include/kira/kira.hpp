// Copyright 2026 The Kira Authors.
//
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


// Convenience header pulling in the whole library.

#pragma once

#include "kira/aperture.hpp"
#include "kira/background.hpp"
#include "kira/blockmap.hpp"
#include "kira/catalog.hpp"
#include "kira/dataflow.hpp"
#include "kira/ellipse.hpp"
#include "kira/error.hpp"
#include "kira/extract.hpp"
#include "kira/fits.hpp"
#include "kira/hash.hpp"
#include "kira/matrix.hpp"
#include "kira/metrics.hpp"
#include "kira/pipeline.hpp"
#include "kira/sched.hpp"
#include "kira/synth.hpp"

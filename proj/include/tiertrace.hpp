// Copyright 2026 The tiertrace Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef TIERTRACE_HPP_
#define TIERTRACE_HPP_

#include "tiertrace/analyzer.hpp"
#include "tiertrace/config.hpp"
#include "tiertrace/detailed_session.hpp"
#include "tiertrace/error.hpp"
#include "tiertrace/event_model.hpp"
#include "tiertrace/light_session.hpp"
#include "tiertrace/pipeline.hpp"
#include "tiertrace/rational.hpp"
#include "tiertrace/report.hpp"
#include "tiertrace/simulator.hpp"
#include "tiertrace/units.hpp"

#endif  // TIERTRACE_HPP_

// Copyright 2026 The Slimnet Authors. All Rights Reserved.
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

#ifndef SLIMNET_SLIMNET_HPP
#define SLIMNET_SLIMNET_HPP

#include "slimnet/analyzer.hpp"
#include "slimnet/dataset.hpp"
#include "slimnet/layers.hpp"
#include "slimnet/model_io.hpp"
#include "slimnet/multipass.hpp"
#include "slimnet/network.hpp"
#include "slimnet/optimizer.hpp"
#include "slimnet/pruner.hpp"
#include "slimnet/sparsity.hpp"
#include "slimnet/tensor.hpp"

#endif  // SLIMNET_SLIMNET_HPP

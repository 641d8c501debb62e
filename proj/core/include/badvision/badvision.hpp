// Copyright 2026 The BadVision Authors. All Rights Reserved.
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

#ifndef BADVISION_BADVISION_HPP_
#define BADVISION_BADVISION_HPP_

#include "badvision/attack_targeted.hpp"
#include "badvision/attack_untargeted.hpp"
#include "badvision/common.hpp"
#include "badvision/config.hpp"
#include "badvision/data.hpp"
#include "badvision/detection.hpp"
#include "badvision/encoder_model.hpp"
#include "badvision/encoders.hpp"
#include "badvision/image_io.hpp"
#include "badvision/metrics.hpp"
#include "badvision/optim.hpp"
#include "badvision/perturbation.hpp"
#include "badvision/pretrain.hpp"
#include "badvision/records.hpp"
#include "badvision/small_conv.hpp"
#include "badvision/synthetic.hpp"
#include "badvision/trigger.hpp"

#endif  // BADVISION_BADVISION_HPP_

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trisense/gradcheck.hpp"
#include "trisense/model.hpp"
#include "trisense/synth.hpp"

namespace trisense {

// A small model and one synthetic MR sample whose loss touches every
// parameter group. Parameters are jittered away from their initial values
// so zero-initialised weights do not sit at special points.
struct GradcheckFixture {
    SynthCorpus corpus;
    ModelConfig config;
    ParameterStore params;
    ModelInput input;
    std::vector<TokenId> response;
};

GradcheckFixture gradcheck_fixture(std::uint64_t seed, FusionMode mode = FusionMode::Adaptive);
std::vector<ParamCheck> model_gradcheck(std::uint64_t seed, const FiniteDiffOptions& options = {},
                                        FusionMode mode = FusionMode::Adaptive);

struct VerifyCheck {
    std::string name;
    bool passed = false;
    std::string detail;
    std::uint64_t seed = 0;
};

// Quick self-checks: gradients, simplex weights, time tokens, decoder
// automaton, span metrics, softmax stability and the synthetic oracle gate.
std::vector<VerifyCheck> run_verify(std::uint64_t seed);

}  // namespace trisense

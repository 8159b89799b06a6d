#pragma once

#include "gcap/training.hpp"

namespace gcap {

// Independent long-double evaluation of the teacher-forced loss for one
// sample. Follows the model equations and the engine's dropout draw order
// exactly, but shares none of the tensor/tape code, so it serves as the
// high-precision side of finite-difference checks (the quotient needs the
// loss to be far more accurate than the gradients under test) and as a
// second route through the full forward pass.
long double reference_teacher_forced_loss(const ModelParams& params,
                                          const TrainingSample& sample, bool training,
                                          std::uint64_t mask_seed);

}  // namespace gcap

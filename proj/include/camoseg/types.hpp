#pragma once

#include <torch/torch.h>

namespace camoseg {

/// P_edge, P_loc, P_final: B x 1 x H x W at the input resolution, values in [0,1].
struct PredictionTriplet {
    torch::Tensor edge;
    torch::Tensor loc;
    torch::Tensor final;
};

}  // namespace camoseg

#pragma once

#include <cstdint>

#include "json.hpp"
#include "stformer/model/config.hpp"

namespace stf::audit {

// Closed-form attention costs in multiply-accumulates. Every extent must be
// positive (ShapeError otherwise); overflow of 64 bits throws std::overflow_error.

/// Spatial local-window MSA: 4HWDC^2 + 2 Gh Gw HWDC.
std::uint64_t flops_slw(std::uint64_t H, std::uint64_t W, std::uint64_t D, std::uint64_t C, std::uint64_t Gh,
                        std::uint64_t Gw);
/// Temporal MSA: 2HWDC^2 + HWD^2 C.
std::uint64_t flops_tw(std::uint64_t H, std::uint64_t W, std::uint64_t D, std::uint64_t C);
/// Both branches of one block's attention.
std::uint64_t flops_st(std::uint64_t H, std::uint64_t W, std::uint64_t D, std::uint64_t C, std::uint64_t Gh,
                       std::uint64_t Gw);
/// Global MSA over all HWD tokens: 4HWDC^2 + 2(HWD)^2 C.
std::uint64_t flops_gmsa(std::uint64_t H, std::uint64_t W, std::uint64_t D, std::uint64_t C);

struct AttentionDims {
  std::size_t H = 0, W = 0, D = 0, C = 0, Gh = 7, Gw = 7, heads = 1;
};

/// MACs reported by the matmul kernels while the real SLW-MSA / TW-MSA
/// branches run once on a random [1, D, H, W, C] field.
std::uint64_t count_macs_slw(const AttentionDims& d, bool shifted = false);
std::uint64_t count_macs_tw(const AttentionDims& d);

struct CostBreakdown {
  AttentionDims dims;
  std::uint64_t analytic_slw = 0, analytic_tw = 0, analytic_st = 0, analytic_gmsa = 0;
  std::uint64_t measured_slw = 0, measured_tw = 0;
};

/// Evaluates the formulas, then the instrumented kernels.
CostBreakdown audit_attention(const AttentionDims& d);

/// Whole-network analytic MACs for an nx x ny input with the configured B.
/// Convolutions count every kernel tap at every output position.
struct NetworkCost {
  std::uint64_t token_gen = 0;
  std::uint64_t attention = 0;
  std::uint64_t grff = 0;
  std::uint64_t reconstruct = 0;
  std::uint64_t total = 0;
  std::uint64_t parameters = 0;
};

NetworkCost network_cost(const model::ModelConfig& c, std::size_t nx, std::size_t ny);

void to_json(nlohmann::json& j, const AttentionDims& d);
void to_json(nlohmann::json& j, const CostBreakdown& c);
void to_json(nlohmann::json& j, const NetworkCost& c);

}  // namespace stf::audit

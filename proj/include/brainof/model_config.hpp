#pragma once

#include <cstddef>
#include <vector>

namespace brainof {

struct ModelConfig {
    std::size_t embed_dim = 32;     // D
    std::size_t latents = 16;       // C
    std::size_t heads = 4;
    std::size_t patch_len = 32;
    std::size_t max_seq_len = 256;
    std::size_t backbone_layers = 2;
    std::size_t arness_layers = 1;
    std::size_t routed_experts = 4;   // E
    std::size_t active_experts = 2;   // k
    std::size_t shared_experts = 1;   // N_s
    std::size_t expert_hidden = 0;    // H; 0 means 2*embed_dim
    std::vector<std::size_t> conv_channels = {4, 4, 4};
    double layer_scale_init = 1e-4;

    std::size_t expert_hidden_dim() const { return expert_hidden ? expert_hidden : 2 * embed_dim; }
    std::size_t head_dim() const { return embed_dim / heads; }        // 2d per head
    std::size_t half_head_dim() const { return head_dim() / 2; }      // d

    void validate() const;
};

}  // namespace brainof

#pragma once

#include <cstdint>
#include <functional>

#include <torch/torch.h>

#include "a3gan/discriminator.hpp"
#include "a3gan/embedder.hpp"

namespace a3gan {

/// D(images [B,C,H,W], alpha [B,N]) -> scores [B].
using Critic = std::function<torch::Tensor(const torch::Tensor&, const torch::Tensor&)>;

Critic as_critic(Discriminator d);

struct LossWeights {
    double lambda_att_max = 0.75;
    double lambda_pix = 8.0;
    double lambda_id = 0.02;
    double lambda_gp = 10.0;

    void validate() const;
};

namespace losses {

/// Linear ramp lambda_max * step / total, clamped to [0, lambda_max].
double lambda_att_schedule(int64_t step, int64_t total_steps, double lambda_att_max);

/// Attribute-consistency critic term: mean(D(I, alpha_bar) - D(I, alpha)).
torch::Tensor adv_att(const Critic& critic, const torch::Tensor& real_old,
                      const torch::Tensor& alpha, const torch::Tensor& alpha_bar);

/// Authenticity critic term: mean(D(fake, fake_alpha)) - mean(D(real, real_alpha)).
torch::Tensor adv_auth(const Critic& critic, const torch::Tensor& real_old,
                       const torch::Tensor& real_alpha, const torch::Tensor& fake,
                       const torch::Tensor& fake_alpha);
inline torch::Tensor adv_auth(const Critic& critic, const torch::Tensor& real_old,
                              const torch::Tensor& alpha, const torch::Tensor& fake) {
    return adv_auth(critic, real_old, alpha, fake, alpha);
}

/// lambda_gp * mean((||grad_x D(x_hat, alpha)||_2 - 1)^2) on per-sample
/// interpolates x_hat = eps * real + (1 - eps) * fake, eps ~ U[0, 1] drawn
/// from `gen`. The graph is kept so the result can be backpropagated into
/// the critic's parameters.
torch::Tensor gradient_penalty(const Critic& critic, const torch::Tensor& real,
                               const torch::Tensor& fake, const torch::Tensor& alpha,
                               double lambda_gp, torch::Generator gen);

/// Same, with caller-supplied interpolation coefficients eps [B].
torch::Tensor gradient_penalty_at(const Critic& critic, const torch::Tensor& real,
                                  const torch::Tensor& fake, const torch::Tensor& alpha,
                                  double lambda_gp, const torch::Tensor& eps);

torch::Tensor d_total(const torch::Tensor& att, const torch::Tensor& auth, const torch::Tensor& gp,
                      double lambda_att);

/// -mean(D(fake, alpha)).
torch::Tensor adv_g(const Critic& critic, const torch::Tensor& fake, const torch::Tensor& alpha);

/// Batch mean of ||pool(fake) - pool(input)||_F^2 + ||fc(fake) - fc(input)||_2^2.
torch::Tensor identity(const FeatureEmbedder& embedder, const torch::Tensor& input,
                       const torch::Tensor& fake);

/// Batch mean of the per-image mean squared pixel difference.
torch::Tensor pixel(const torch::Tensor& input, const torch::Tensor& fake);

torch::Tensor g_total(const torch::Tensor& adv, const torch::Tensor& id, const torch::Tensor& pix,
                      const LossWeights& w);

}  // namespace losses
}  // namespace a3gan

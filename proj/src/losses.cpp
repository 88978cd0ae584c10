#include "a3gan/losses.hpp"

#include "a3gan/errors.hpp"

namespace a3gan {

Critic as_critic(Discriminator d) {
    return [d](const torch::Tensor& images, const torch::Tensor& alpha) mutable {
        return d->forward(images, alpha);
    };
}

void LossWeights::validate() const {
    if (lambda_att_max < 0 || lambda_pix < 0 || lambda_id < 0 || lambda_gp < 0) {
        throw ValidationError("loss weights must be non-negative");
    }
}

namespace losses {

namespace {

void require_batch(const torch::Tensor& t, const char* who) {
    if (!t.defined() || t.dim() == 0 || t.size(0) == 0) {
        throw ArgumentError(std::string(who) + ": empty batch");
    }
}

void require_aligned(const torch::Tensor& a, const torch::Tensor& b, const char* who) {
    if (a.size(0) != b.size(0)) {
        throw DimensionError(std::string(who) + ": batch sizes differ (" + std::to_string(a.size(0)) +
                             " vs " + std::to_string(b.size(0)) + ")");
    }
}

}  // namespace

double lambda_att_schedule(int64_t step, int64_t total_steps, double lambda_att_max) {
    if (total_steps <= 0) throw ArgumentError("lambda_att_schedule: total_steps must be >= 1");
    const double t = static_cast<double>(step) / static_cast<double>(total_steps);
    return lambda_att_max * std::clamp(t, 0.0, 1.0);
}

torch::Tensor adv_att(const Critic& critic, const torch::Tensor& real_old, const torch::Tensor& alpha,
                      const torch::Tensor& alpha_bar) {
    require_batch(real_old, "adv_att");
    require_aligned(real_old, alpha, "adv_att");
    require_aligned(real_old, alpha_bar, "adv_att");
    if (alpha.size(-1) > 0 && torch::eq(alpha, alpha_bar).all(-1).any().item<bool>()) {
        throw ArgumentError("adv_att: mismatched attributes equal the true ones for some sample");
    }
    return (critic(real_old, alpha_bar) - critic(real_old, alpha)).mean();
}

torch::Tensor adv_auth(const Critic& critic, const torch::Tensor& real_old, const torch::Tensor& real_alpha,
                       const torch::Tensor& fake, const torch::Tensor& fake_alpha) {
    require_batch(real_old, "adv_auth");
    require_batch(fake, "adv_auth");
    require_aligned(real_old, real_alpha, "adv_auth");
    require_aligned(fake, fake_alpha, "adv_auth");
    return critic(fake, fake_alpha).mean() - critic(real_old, real_alpha).mean();
}

torch::Tensor gradient_penalty_at(const Critic& critic, const torch::Tensor& real, const torch::Tensor& fake,
                                  const torch::Tensor& alpha, double lambda_gp, const torch::Tensor& eps) {
    require_batch(real, "gradient_penalty");
    if (real.sizes() != fake.sizes()) throw DimensionError("gradient_penalty: real/fake shapes differ");
    require_aligned(real, alpha, "gradient_penalty");
    if (eps.numel() != real.size(0)) throw DimensionError("gradient_penalty: one eps per sample required");

    std::vector<int64_t> bshape(static_cast<size_t>(real.dim()), 1);
    bshape[0] = real.size(0);
    auto e = eps.to(real.options()).view(bshape);
    auto x_hat = (e * real.detach() + (1 - e) * fake.detach()).requires_grad_(true);
    auto scores = critic(x_hat, alpha);
    if (!scores.requires_grad()) {
        throw CapabilityError("gradient_penalty: critic output is not differentiable w.r.t. its input");
    }
    auto grads = torch::autograd::grad({scores.sum()}, {x_hat}, /*grad_outputs=*/{},
                                       /*retain_graph=*/true, /*create_graph=*/true,
                                       /*allow_unused=*/true)[0];
    if (!grads.defined()) {
        throw CapabilityError("gradient_penalty: critic output does not depend on its input");
    }
    auto norms = grads.flatten(1).norm(2, 1);
    return lambda_gp * (norms - 1).square().mean();
}

torch::Tensor gradient_penalty(const Critic& critic, const torch::Tensor& real, const torch::Tensor& fake,
                               const torch::Tensor& alpha, double lambda_gp, torch::Generator gen) {
    require_batch(real, "gradient_penalty");
    auto eps = torch::rand({real.size(0)}, gen, torch::TensorOptions().dtype(torch::kFloat64));
    return gradient_penalty_at(critic, real, fake, alpha, lambda_gp, eps);
}

torch::Tensor d_total(const torch::Tensor& att, const torch::Tensor& auth, const torch::Tensor& gp,
                      double lambda_att) {
    if (lambda_att < 0) throw ArgumentError("d_total: lambda_att must be >= 0");
    return lambda_att * att + auth + gp;
}

torch::Tensor adv_g(const Critic& critic, const torch::Tensor& fake, const torch::Tensor& alpha) {
    require_batch(fake, "adv_g");
    require_aligned(fake, alpha, "adv_g");
    return -critic(fake, alpha).mean();
}

torch::Tensor identity(const FeatureEmbedder& embedder, const torch::Tensor& input, const torch::Tensor& fake) {
    require_batch(input, "identity");
    require_aligned(input, fake, "identity");
    const auto a = embedder.embed(input);
    const auto b = embedder.embed(fake);
    if (a.pool.sizes() != b.pool.sizes() || a.fc.sizes() != b.fc.sizes()) {
        throw ConfigurationError("identity: embedder features of input and output differ in shape");
    }
    if (a.pool.size(0) != input.size(0) || a.fc.size(0) != input.size(0)) {
        throw ConfigurationError("identity: embedder did not return one feature per sample");
    }
    auto pool_term = (b.pool - a.pool).square().flatten(1).sum(1);
    auto fc_term = (b.fc - a.fc).square().flatten(1).sum(1);
    return (pool_term + fc_term).mean();
}

torch::Tensor pixel(const torch::Tensor& input, const torch::Tensor& fake) {
    if (input.sizes() != fake.sizes()) throw DimensionError("pixel: input and output shapes differ");
    require_batch(input, "pixel");
    return (fake - input).square().flatten(1).mean(1).mean();
}

torch::Tensor g_total(const torch::Tensor& adv, const torch::Tensor& id, const torch::Tensor& pix,
                      const LossWeights& w) {
    return adv + w.lambda_id * id + w.lambda_pix * pix;
}

}  // namespace losses
}  // namespace a3gan

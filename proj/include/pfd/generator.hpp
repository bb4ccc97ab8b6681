// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "pfd/data.hpp"

namespace pfd {

/// Seeded synthetic click/conversion log.
///
/// Users and items get standard-normal latents u, v. An item has a
/// standardized log-price z (raw price = 50 * exp(0.5 z)) and a category
/// given by the arg-max latent coordinate. Each record pairs a uniform user
/// with a uniform item and draws
///
///   logit = u.v / sqrt(latent_dim) + price_beta * z + intercept
///   label ~ Bernoulli(sigmoid(logit))
///
/// Regular features are discretized noisy views of u, v and the price.
/// Interacted privileged features are the user's behavior clicks in the
/// item's category plus discretized noisy per-coordinate products u_k v_k.
/// Post-event privileged features are the dwell time
/// `logit + confound_alpha * z + noise` and a viewed-comments flag that
/// thresholds a noisy copy of the dwell time. With confound_alpha > 0 and
/// price_beta < 0, expensive items draw long dwell times while converting
/// less, so dwell alone misleads without the price.
///
/// Behavior sequences sample distinct items from the user's top
/// `behavior_pool` items by u.v. Bucket boundaries are equal-frequency
/// quantiles of the train split and are frozen into the schema.
Dataset generate(const GeneratorConfig& config);

}  // namespace pfd

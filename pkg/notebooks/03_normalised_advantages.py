"""
Why confidence overshoots the hit rate
======================================

A one-context bandit: the policy picks a confidence bin, the click hits with
probability p, and the reward is 1 - (c - hit)^2. The expected reward is
maximised at c = p. GRPO with standardised group advantages does not land
there.
"""
import numpy as np

from clickcal import group_advantages

K = 21
values = np.arange(K) / (K - 1)


def run(standardise, p, steps=4000, lr=0.5, seed=0):
    rng = np.random.default_rng(seed)
    theta = np.zeros(K)
    for _ in range(steps):
        pi = np.exp(theta - theta.max())
        pi /= pi.sum()
        k = rng.choice(K, 8, p=pi)
        hit = rng.random(8) < p
        r = 1 - (values[k] - hit) ** 2
        adv = group_advantages(r) if standardise else r - r.mean()
        theta += lr * (np.bincount(k, adv, K) - adv.sum() * pi) / 8
    pi = np.exp(theta - theta.max())
    return float(pi @ values / pi.sum())


for p in (0.6, 0.75, 0.9):
    print(f"hit rate {p:.2f}: standardised -> {run(True, p):.2f}   mean-centred -> {run(False, p):.2f}")

# Dividing by the group standard deviation gives every group with any spread
# the same total push. The groups that move the head most are the nearly
# uniform ones (one miss among seven hits), where the advantage is large and
# points toward the majority outcome. Each group casts a vote for the more
# likely side, and the head drifts toward the median outcome rather than the
# mean. With p above one half the median hit is 1, so confidence overshoots.

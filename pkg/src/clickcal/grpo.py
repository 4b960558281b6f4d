"""Group-relative advantages and the clipped, KL-regularised surrogate.

For a group of ``N`` actions drawn from ``pi_old`` on one task::

    A_i = (R_i - mean(R)) / std(R)                       (population std)
    J   = 1/N sum_i min(r_i A_i, clip(r_i, 1-eps, 1+eps) A_i) - beta KL(pi || pi_ref)

with ``r_i = pi(o_i) / pi_old(o_i)`` over the joint (cell, confidence-bin)
action.  The KL term is exact over the joint categorical distribution, and
the gradient of ``J`` is computed in closed form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .env import SyntheticTask, ToyPolicy, policy_log_forward, policy_logits
from .geometry import InvalidParameterError

STD_FLOOR = 1e-8


class NumericalDomainError(ArithmeticError):
    pass


class TrainingFailureError(RuntimeError):
    pass


@dataclass(frozen=True)
class Generation:
    cell: int
    conf_bin: int
    logprob_old: float
    reward: float

    @property
    def action(self) -> tuple[int, int]:
        return (self.cell, self.conf_bin)


@dataclass(frozen=True)
class GroupSample:
    generations: list[Generation]

    @property
    def n(self) -> int:
        return len(self.generations)

    @property
    def rewards(self) -> np.ndarray:
        return np.array([g.reward for g in self.generations], dtype=np.float64)


@dataclass(frozen=True)
class UpdateConfig:
    epsilon: float = 0.2
    beta: float = 0.04
    learning_rate: float = 0.05
    # step size for the confidence head; None reuses learning_rate
    conf_learning_rate: float | None = 1.0
    group_size: int = 8
    seed: int = 0
    # False masks the confidence factor out of the ratio and freezes that head
    train_confidence: bool = True

    def validate(self) -> None:
        if not 0 < self.epsilon < 1:
            raise InvalidParameterError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if not (math.isfinite(self.beta) and self.beta >= 0):
            raise InvalidParameterError(f"beta must be >= 0, got {self.beta}")
        if not (math.isfinite(self.learning_rate) and self.learning_rate >= 0):
            raise InvalidParameterError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.conf_learning_rate is not None and not (
                math.isfinite(self.conf_learning_rate) and self.conf_learning_rate >= 0):
            raise InvalidParameterError(f"conf_learning_rate must be >= 0, got {self.conf_learning_rate}")
        if self.group_size < 2:
            raise InvalidParameterError(f"group_size must be >= 2, got {self.group_size}")


def group_advantages(rewards) -> np.ndarray:
    r = np.asarray(rewards, dtype=np.float64)
    if r.ndim != 1 or r.size < 2:
        raise InvalidParameterError(f"need at least 2 rewards to normalise, got {r.size}")
    std = r.std()
    if std < STD_FLOOR:
        return np.zeros_like(r)
    return (r - r.mean()) / std


def clipped_term(ratio: float, advantage: float, epsilon: float) -> float:
    if not ratio > 0:
        raise InvalidParameterError(f"ratio must be positive, got {ratio}")
    clipped = min(max(ratio, 1.0 - epsilon), 1.0 + epsilon)
    return min(ratio * advantage, clipped * advantage)


def kl_categorical(p, q) -> float:
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise InvalidParameterError(f"support mismatch: {p.shape} vs {q.shape}")
    if np.any(p < 0) or np.any(q < 0):
        raise InvalidParameterError("probabilities must be non-negative")
    if abs(p.sum() - 1) > 1e-9 or abs(q.sum() - 1) > 1e-9:
        raise InvalidParameterError("distributions must sum to 1")
    mask = p > 0
    if np.any(q[mask] == 0):
        raise InvalidParameterError("q must be positive wherever p is positive")
    return float(np.sum(p[mask] * (np.log(p[mask]) - np.log(q[mask]))))


def joint_kl(policy: ToyPolicy, policy_ref: ToyPolicy, task: SyntheticTask) -> float:
    return _joint_kl_parts(policy_log_forward(policy, task), policy_log_forward(policy_ref, task))[0]


def _joint_kl_parts(logp, logp_ref):
    lp, lq = logp
    lpr, lqr = logp_ref
    p, q = np.exp(lp), np.exp(lq)
    v = lq - lqr
    per_cell = np.sum(q * v, axis=1)
    u = lp - lpr + per_cell
    return float(np.sum(p * u)), p, q, u, v, per_cell


def _action_logprobs(logp, group: GroupSample, with_conf: bool) -> np.ndarray:
    lp, lq = logp
    cells = np.array([g.cell for g in group.generations])
    bins = np.array([g.conf_bin for g in group.generations])
    out = lp[cells]
    if with_conf:
        out = out + lq[cells, bins]
    return out


def objective_and_grad(group: GroupSample, policy: ToyPolicy, policy_old: ToyPolicy, policy_ref: ToyPolicy,
                       task: SyntheticTask, config: UpdateConfig, advantages=None):
    """Return ``(J, grad, kl)`` with ``grad`` laid out like ``policy.flat()``."""
    if advantages is None:
        advantages = group_advantages(group.rewards)
    adv = np.asarray(advantages, dtype=np.float64)
    n = group.n
    eps, beta = config.epsilon, config.beta
    with_conf = config.train_confidence

    logp = policy_log_forward(policy, task)
    logp_old = policy_log_forward(policy_old, task)
    logp_ref = policy_log_forward(policy_ref, task)

    lp_new = _action_logprobs(logp, group, with_conf)
    lp_old = _action_logprobs(logp_old, group, with_conf)
    if not np.all(np.isfinite(lp_old)):
        raise NumericalDomainError("old policy assigns zero probability to a recorded action")
    ratio = np.exp(lp_new - lp_old)
    clipped = np.clip(ratio, 1.0 - eps, 1.0 + eps)
    unclipped_val = ratio * adv
    surrogate = np.minimum(unclipped_val, clipped * adv)
    # gradient flows only where the unclipped branch attains the min
    coef = np.where(unclipped_val <= clipped * adv, adv * ratio, 0.0) / n

    kl, p, q, u, v, per_cell = _joint_kl_parts(logp, logp_ref)
    objective = float(np.mean(surrogate) - beta * kl)

    g_cells, k_bins = policy.n_cells, policy.conf_bins
    dz = np.zeros(g_cells)
    dy = np.zeros((g_cells, k_bins))
    for c_i, gen in zip(coef, group.generations):
        if c_i == 0.0:
            continue
        c, k = gen.cell, gen.conf_bin
        dz -= c_i * p
        dz[c] += c_i
        if with_conf:
            dy[c] -= c_i * q[c]
            dy[c, k] += c_i
    if beta:
        dz -= beta * p * (u - kl)
        dy -= beta * p[:, None] * q * (v - per_cell[:, None])

    grad = policy.backward(np.asarray(task.instruction, dtype=np.float64), dz, dy)
    return objective, grad, kl


def grpo_objective(group: GroupSample, policy: ToyPolicy, policy_old: ToyPolicy, policy_ref: ToyPolicy,
                   task: SyntheticTask, config: UpdateConfig) -> float:
    return objective_and_grad(group, policy, policy_old, policy_ref, task, config)[0]


def update_step(policy: ToyPolicy, group: GroupSample, policy_old: ToyPolicy, policy_ref: ToyPolicy,
                task: SyntheticTask, config: UpdateConfig) -> ToyPolicy:
    """One gradient-ascent step on ``J``; degenerate groups leave the policy untouched."""
    adv = group_advantages(group.rewards)
    if not np.any(adv):
        return policy.copy()
    objective, grad, _ = objective_and_grad(group, policy, policy_old, policy_ref, task, config, adv)
    return apply_gradient(policy, objective, grad, config)


def apply_gradient(policy: ToyPolicy, objective: float, grad: np.ndarray, config: UpdateConfig) -> ToyPolicy:
    """Ascend ``grad``, honouring the confidence-head step size and freeze flag."""
    if not (math.isfinite(objective) and np.all(np.isfinite(grad))):
        raise TrainingFailureError("non-finite objective or gradient")
    step = config.learning_rate * grad
    conf = policy.conf_slice()
    if not config.train_confidence:
        step[conf] = 0.0
    elif config.conf_learning_rate is not None:
        step[conf] = config.conf_learning_rate * grad[conf]
    return policy.with_flat(policy.flat() + step)

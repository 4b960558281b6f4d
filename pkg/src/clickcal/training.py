"""GRPO training loop for the toy policy on synthetic tasks."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .env import SyntheticTask, ToyPolicy, policy_logits, sample_rollout
from .geometry import DEFAULT_ALPHA, InvalidParameterError
from .grpo import Generation, GroupSample, UpdateConfig, apply_gradient, group_advantages, objective_and_grad
from .rewards import CORRECTNESS_ONLY, DUAL, resolve_mode, total_reward


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 2000
    update: UpdateConfig = field(default_factory=UpdateConfig)
    reward_mode: str = DUAL
    alpha: float = DEFAULT_ALPHA
    conf_bins: int = 21
    temperature: float = 1.0
    init_scale: float = 0.0
    # warm start for the click head, standing in for supervised pre-training
    cell_gain: float = 12.0
    conf_head: str = "full"

    def validate(self) -> None:
        if self.steps < 0:
            raise InvalidParameterError(f"steps must be >= 0, got {self.steps}")
        if self.temperature <= 0:
            raise InvalidParameterError(f"training temperature must be > 0, got {self.temperature}")
        if self.alpha < 0:
            raise InvalidParameterError(f"alpha must be >= 0, got {self.alpha}")
        resolve_mode(self.reward_mode, self.alpha)
        self.update.validate()

    @property
    def effective_mode(self) -> str:
        return resolve_mode(self.reward_mode, self.alpha)

    def header(self) -> dict:
        d = asdict(self)
        d["effective_mode"] = self.effective_mode
        return d


def train(tasks: list[SyntheticTask], config: TrainConfig, policy: ToyPolicy | None = None):
    """Run GRPO and return ``(policy, metrics)``.

    ``metrics`` is a list of dicts, one per step.  The reference policy is the
    starting policy; the sampling policy is refreshed every step.
    """
    config.validate()
    if not tasks:
        raise InvalidParameterError("need at least one training task")
    ucfg = config.update
    mode = config.effective_mode
    if mode == CORRECTNESS_ONLY and ucfg.train_confidence:
        ucfg = replace(ucfg, train_confidence=False)

    rng = np.random.default_rng(ucfg.seed)
    t0 = tasks[0]
    if policy is None:
        policy = ToyPolicy.init(t0.grid_w, t0.grid_h, config.conf_bins, scale=config.init_scale,
                                rng=np.random.default_rng([ucfg.seed, 1]), cell_gain=config.cell_gain,
                                conf_head=config.conf_head)
    policy_ref = policy.copy()
    metrics = []

    for step in range(config.steps):
        task = tasks[int(rng.integers(len(tasks)))]
        policy_old = policy
        logits = policy_logits(policy_old, task)
        gens, parts = [], []
        for _ in range(ucfg.group_size):
            ro = sample_rollout(policy_old, task, config.temperature, rng, logits=logits)
            rb = total_reward(ro.raw_text, task.target, config.alpha, mode)
            gens.append(Generation(ro.cell, ro.conf_bin, ro.logprob, rb.total))
            parts.append(rb.as_tuple())
        group = GroupSample(gens)
        adv = group_advantages(group.rewards)
        objective, grad, kl = objective_and_grad(group, policy, policy_old, policy_ref, task, ucfg, adv)
        if np.any(adv):
            policy = apply_gradient(policy, objective, grad, ucfg)

        mean = np.mean(parts, axis=0)
        metrics.append({
            "step": step,
            "task_id": task.task_id,
            "reward_format": float(mean[0]),
            "reward_correctness": float(mean[1]),
            "reward_confidence": float(mean[2]),
            "reward_total": float(mean[3]),
            "objective": objective,
            "kl": kl,
            "adv_zero": bool(not np.any(adv)),
        })
    return policy, metrics

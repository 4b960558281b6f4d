"""Format, correctness, and confidence rewards for one generated prediction.

Three reward modes share one code path:

``dual``
    format + correctness + Brier reward against the truncated Gaussian field.
``binary_conf``
    format + correctness + Brier reward against the 0/1 hit indicator
    (the ``alpha = 0`` ablation).
``correctness_only``
    format + correctness; the confidence component is always 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .codec import parse_prediction
from .geometry import BBox, ConfidenceField, InvalidParameterError, Point, build_field, contains, truncated_confidence

DUAL = "dual"
BINARY_CONF = "binary_conf"
CORRECTNESS_ONLY = "correctness_only"
REWARD_MODES = (DUAL, BINARY_CONF, CORRECTNESS_ONLY)


@dataclass(frozen=True)
class RewardBreakdown:
    format: float
    correctness: float
    confidence: float

    @property
    def total(self) -> float:
        return self.format + self.correctness + self.confidence

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.format, self.correctness, self.confidence, self.total)


def _check_conf(c_hat: float) -> None:
    if not (math.isfinite(c_hat) and 0.0 <= c_hat <= 1.0):
        raise InvalidParameterError(f"verbalized confidence must lie in [0, 1], got {c_hat}")


def correctness_reward(p: Point, bbox: BBox) -> float:
    return 1.0 if contains(bbox, p) else 0.0


def confidence_reward(c_hat: float, fld: ConfidenceField, p: Point) -> float:
    _check_conf(c_hat)
    return 1.0 - (c_hat - truncated_confidence(fld, p)) ** 2


def binary_confidence_reward(c_hat: float, p: Point, bbox: BBox) -> float:
    _check_conf(c_hat)
    return 1.0 - (c_hat - correctness_reward(p, bbox)) ** 2


def format_reward(raw: str) -> float:
    return 1.0 if parse_prediction(raw).parse_ok else 0.0


def resolve_mode(mode: str, alpha: float) -> str:
    """``alpha == 0`` with the dual reward means the binary-confidence ablation."""
    if mode not in REWARD_MODES:
        raise InvalidParameterError(f"unknown reward mode {mode!r}; expected one of {REWARD_MODES}")
    if mode == DUAL and alpha == 0:
        return BINARY_CONF
    return mode


def total_reward(raw: str, bbox: BBox, alpha: float, mode: str = DUAL) -> RewardBreakdown:
    mode = resolve_mode(mode, alpha)
    # only the dual mode reads the field, but alpha is validated up front in every mode
    fld = build_field(bbox, alpha) if mode == DUAL else None
    if mode != DUAL and not (math.isfinite(alpha) and alpha >= 0):
        raise InvalidParameterError(f"alpha must be non-negative, got {alpha}")

    parsed = parse_prediction(raw)
    if not parsed.parse_ok:
        return RewardBreakdown(0.0, 0.0, 0.0)
    p, c = parsed.point, parsed.c_hat
    correct = correctness_reward(p, bbox)
    if mode == DUAL:
        conf = confidence_reward(c, fld, p)
    elif mode == BINARY_CONF:
        conf = binary_confidence_reward(c, p, bbox)
    else:
        conf = 0.0
    return RewardBreakdown(1.0, correct, conf)

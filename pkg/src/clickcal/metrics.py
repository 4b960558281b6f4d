"""Calibration metrics, stability probing, and confidence heatmaps."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .codec import PredictionRecord
from .env import SyntheticTask, ToyPolicy, cell_center, cell_of, make_rollout, policy_logits, sample_rollout, softmax
from .geometry import DEFAULT_ALPHA, InvalidParameterError, Point, build_field, contains, truncated_confidence

AP_THRESHOLDS = (0.5, 0.75, 0.9, 0.95)
ECE_BINS = 10


class InvalidInputError(ValueError):
    pass


def _nonempty(records):
    if len(records) == 0:
        raise InvalidInputError("metric needs at least one record")
    return records


def _arrays(records):
    _nonempty(records)
    c = np.array([r.c_hat for r in records], dtype=np.float64)
    y = np.array([r.correct for r in records], dtype=np.float64)
    return c, y


def accuracy(records) -> float:
    _, y = _arrays(records)
    # same expression as ap_at_conf so the tau=0 case agrees bit for bit
    return float(y.sum() / y.size)


def ap_at_conf(records, tau: float) -> float:
    """Precision among predictions with stated confidence >= ``tau``; 0 if none qualify."""
    if not 0.0 <= tau <= 1.0:
        raise InvalidParameterError(f"threshold must lie in [0, 1], got {tau}")
    c, y = _arrays(records)
    keep = c >= tau
    n = int(keep.sum())
    return float(y[keep].sum() / n) if n else 0.0


def brier(records) -> float:
    c, y = _arrays(records)
    return float(np.mean((c - y) ** 2))


def ece(records, n_bins: int = ECE_BINS) -> float:
    if n_bins < 1:
        raise InvalidParameterError(f"n_bins must be >= 1, got {n_bins}")
    c, y = _arrays(records)
    idx = np.minimum((c * n_bins).astype(np.int64), n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    conf_sum = np.bincount(idx, weights=c, minlength=n_bins)
    acc_sum = np.bincount(idx, weights=y, minlength=n_bins)
    # |acc_b - conf_b| * n_b / n, written on sums so empty bins drop out
    return float(np.sum(np.abs(acc_sum - conf_sum)) / c.size)


def confidence_gap(records) -> float:
    c, y = _arrays(records)
    return float(c.mean() - y.mean())


@dataclass
class CalibrationReport:
    n: int
    accuracy: float
    ap_at: dict[str, float]
    brier: float
    ece: float
    mean_verbalized_conf: float
    mean_prob_conf: float
    confidence_gap: float

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"

    def to_text(self) -> str:
        rows = [("n", str(self.n)), ("accuracy", f"{self.accuracy:.4f}")]
        rows += [(f"AP@{k}", f"{v:.4f}") for k, v in self.ap_at.items()]
        rows += [
            ("brier", f"{self.brier:.4f}"),
            ("ece", f"{self.ece:.4f}"),
            ("mean_verbalized_conf", f"{self.mean_verbalized_conf:.4f}"),
            ("mean_prob_conf", f"{self.mean_prob_conf:.4f}"),
            ("confidence_gap", f"{self.confidence_gap:+.4f}"),
        ]
        width = max(len(k) for k, _ in rows)
        vwidth = max(len(v) for _, v in rows)
        return "".join(f"{k:<{width}}  {v:>{vwidth}}\n" for k, v in rows)


REPORT_SCHEMA = {
    "type": "object",
    "required": ["n", "accuracy", "ap_at", "brier", "ece", "mean_verbalized_conf",
                 "mean_prob_conf", "confidence_gap"],
    "properties": {
        "n": {"type": "integer", "minimum": 1},
        "accuracy": {"type": "number", "minimum": 0, "maximum": 1},
        "ap_at": {"type": "object", "additionalProperties": {"type": "number", "minimum": 0, "maximum": 1}},
        "brier": {"type": "number", "minimum": 0, "maximum": 1},
        "ece": {"type": "number", "minimum": 0, "maximum": 1},
        "mean_verbalized_conf": {"type": "number", "minimum": 0, "maximum": 1},
        "mean_prob_conf": {"type": "number", "minimum": 0, "maximum": 1},
        "confidence_gap": {"type": "number", "minimum": -1, "maximum": 1},
    },
}


def calibration_report(records, thresholds: Sequence[float] = AP_THRESHOLDS, n_bins: int = ECE_BINS) -> CalibrationReport:
    _nonempty(records)
    return CalibrationReport(
        n=len(records),
        accuracy=accuracy(records),
        ap_at={str(t): ap_at_conf(records, t) for t in thresholds},
        brier=brier(records),
        ece=ece(records, n_bins),
        mean_verbalized_conf=float(np.mean([r.c_hat for r in records])),
        mean_prob_conf=float(np.mean([r.prob_conf for r in records])),
        confidence_gap=confidence_gap(records),
    )


def predict(policy: ToyPolicy, tasks: Sequence[SyntheticTask]) -> list[PredictionRecord]:
    """Greedy predictions; ``prob_conf`` is the joint probability of the greedy action."""
    out = []
    for task in tasks:
        ro = sample_rollout(policy, task, 0.0)
        out.append(PredictionRecord(
            task_id=task.task_id,
            point=ro.point,
            c_hat=ro.c_hat,
            prob_conf=math.exp(ro.logprob),
            correct=contains(task.target, ro.point),
            target=task.target,
        ))
    return out


# --------------------------------------------------------------------------
# stability

@dataclass
class StabilityReport:
    sample_sizes: list[int]
    mean_variance: list[float]
    per_task_variance: list[float] = field(default_factory=list, repr=False)
    samples: list[list[float]] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {"sample_sizes": self.sample_sizes, "mean_variance": self.mean_variance,
                "per_task_variance": self.per_task_variance}


def stability(policy: ToyPolicy, tasks: Sequence[SyntheticTask], repeats: int = 8, temperature: float = 1.0,
              rng=None, sample_sizes: Sequence[int] | None = None) -> StabilityReport:
    """Fix the greedy click, then resample the confidence ``repeats`` times.

    Mean per-task variance is reported over the first ``n`` tasks for each
    requested ``n`` (all tasks by default).
    """
    if repeats < 2:
        raise InvalidParameterError(f"repeats must be >= 2, got {repeats}")
    if temperature < 0:
        raise InvalidParameterError(f"temperature must be >= 0, got {temperature}")
    rng = np.random.default_rng(rng)
    samples, variances = [], []
    for task in tasks:
        z, y = policy_logits(policy, task)
        cell = int(np.argmax(z))
        if temperature == 0:
            bins = [int(np.argmax(y[cell]))] * repeats
        else:
            probs = softmax(y[cell] / temperature)
            bins = rng.choice(policy.conf_bins, size=repeats, p=probs)
        vals = [policy.decode_conf(int(k)) for k in bins]
        samples.append(vals)
        variances.append(float(np.var(vals)))
    if sample_sizes is None:
        sample_sizes = [len(tasks)]
    sizes = [int(s) for s in sample_sizes]
    if any(s < 1 or s > len(tasks) for s in sizes):
        raise InvalidParameterError(f"sample sizes must lie in [1, {len(tasks)}], got {sizes}")
    means = [float(np.mean(variances[:s])) for s in sizes]
    return StabilityReport(sizes, means, variances, samples)


# --------------------------------------------------------------------------
# heatmaps

def _sample_points(task: SyntheticTask, resolution):
    """Centres of a ``(cols, rows)`` lattice over the screen, row-major."""
    cols, rows = resolution if resolution is not None else (task.grid_w, task.grid_h)
    if cols < 1 or rows < 1:
        raise InvalidParameterError(f"heatmap resolution must be positive, got {cols}x{rows}")
    sx = task.grid_w * task.cell_size / cols
    sy = task.grid_h * task.cell_size / rows
    return [[Point((i + 0.5) * sx, (j + 0.5) * sy) for i in range(cols)] for j in range(rows)]


def truth_heatmap(task: SyntheticTask, alpha: float = DEFAULT_ALPHA, resolution=None) -> np.ndarray:
    fld = build_field(task.target, alpha)
    pts = _sample_points(task, resolution)
    return np.array([[truncated_confidence(fld, p) for p in row] for row in pts], dtype=np.float64)


def policy_heatmap(policy: ToyPolicy, task: SyntheticTask, resolution=None) -> np.ndarray:
    """Greedy confidence emitted when the click is forced to each location."""
    _, y = policy_logits(policy, task)
    greedy = np.argmax(y, axis=1)
    pts = _sample_points(task, resolution)
    return np.array([[policy.decode_conf(int(greedy[cell_of(task, p)])) for p in row] for row in pts],
                    dtype=np.float64)


def heatmap(source, task: SyntheticTask, resolution=None, alpha: float = DEFAULT_ALPHA) -> np.ndarray:
    if source is None or source == "truth":
        return truth_heatmap(task, alpha, resolution)
    if isinstance(source, ToyPolicy):
        return policy_heatmap(source, task, resolution)
    raise InvalidParameterError(f"heatmap source must be 'truth' or a ToyPolicy, got {type(source).__name__}")


def heatmap_csv(m: np.ndarray) -> str:
    return "".join(",".join(repr(float(v)) for v in row) + "\n" for row in m)


def heatmap_pgm(m: np.ndarray) -> bytes:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or np.any(m < 0) or np.any(m > 1):
        raise InvalidParameterError("heatmap must be a 2-D array of values in [0, 1]")
    rows, cols = m.shape
    pix = np.rint(255.0 * m).astype(np.uint8)
    return f"P5\n{cols} {rows}\n255\n".encode("ascii") + pix.tobytes(order="C")


def write_heatmap(prefix, m: np.ndarray) -> tuple[str, str]:
    csv_path, pgm_path = f"{prefix}.csv", f"{prefix}.pgm"
    with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(heatmap_csv(m))
    with open(pgm_path, "wb") as fh:
        fh.write(heatmap_pgm(m))
    return csv_path, pgm_path

"""Synthetic grounding tasks and a two-head linear click/confidence policy.

A screen is a ``grid_w x grid_h`` lattice of square cells.  Each task has one
target box aligned to cell boundaries.  The "instruction" is the one-hot
indicator of the cell holding the box centre plus isotropic Gaussian noise, so
the noise level sets how often even a perfect reader misplaces the click.

The policy emits a cell (click at its centre) and then one of ``K``
confidence bins whose decoded value is ``k / (K - 1)``.  The confidence head
sees the instruction, the chosen cell (one-hot), and the instruction's value at
the chosen cell; the last input is what lets a linear head tell whether its
own click agrees with the instruction.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .codec import emit_prediction, read_typed, write_jsonl
from .geometry import BBox, InvalidParameterError, Point

POLICY_FORMAT = "clickcal-policy"
POLICY_VERSION = 1


class InvalidConfigError(InvalidParameterError):
    pass


@dataclass(frozen=True)
class TaskConfig:
    grid_w: int = 12
    grid_h: int = 12
    cell_size: float = 10.0
    min_box_cells: int = 1
    max_box_cells: int = 3
    noise: float = 0.3
    # odd spans put the box centre on a cell centre, so the best click scores 1
    odd_boxes: bool = False

    def validate(self) -> None:
        if self.grid_w < 1 or self.grid_h < 1:
            raise InvalidConfigError(f"grid must be at least 1x1, got {self.grid_w}x{self.grid_h}")
        if not (math.isfinite(self.cell_size) and self.cell_size > 0):
            raise InvalidConfigError(f"cell_size must be positive, got {self.cell_size}")
        if not 1 <= self.min_box_cells <= self.max_box_cells:
            raise InvalidConfigError(
                f"need 1 <= min_box_cells <= max_box_cells, got {self.min_box_cells}, {self.max_box_cells}")
        if self.odd_boxes and not self._spans():
            raise InvalidConfigError(
                f"no odd box span in [{self.min_box_cells}, {self.max_box_cells}]")
        if self.max_box_cells > min(self.grid_w, self.grid_h):
            raise InvalidConfigError(
                f"box of {self.max_box_cells} cells does not fit a {self.grid_w}x{self.grid_h} grid")
        if not (math.isfinite(self.noise) and self.noise >= 0):
            raise InvalidConfigError(f"noise must be non-negative, got {self.noise}")

    @property
    def n_cells(self) -> int:
        return self.grid_w * self.grid_h

    def _spans(self) -> list[int]:
        spans = range(self.min_box_cells, self.max_box_cells + 1)
        return [s for s in spans if s % 2 == 1] if self.odd_boxes else list(spans)


@dataclass(frozen=True)
class SyntheticTask:
    task_id: str
    grid_w: int
    grid_h: int
    cell_size: float
    target: BBox
    instruction: np.ndarray = field(compare=False)
    seed: int | None = None

    @property
    def n_cells(self) -> int:
        return self.grid_w * self.grid_h

    @property
    def difficulty(self) -> float:
        """Target area relative to screen area (smaller is harder)."""
        return self.target.area / (self.n_cells * self.cell_size ** 2)

    def __eq__(self, other):
        if not isinstance(other, SyntheticTask):
            return NotImplemented
        return (self.to_dict() == other.to_dict())

    def to_dict(self) -> dict:
        return {
            "id": self.task_id,
            "grid_w": self.grid_w,
            "grid_h": self.grid_h,
            "cell_size": self.cell_size,
            "target": self.target.as_list(),
            "instruction": [float(v) for v in self.instruction],
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticTask":
        instr = np.asarray(d["instruction"], dtype=np.float64)
        task = cls(
            task_id=str(d["id"]),
            grid_w=int(d["grid_w"]),
            grid_h=int(d["grid_h"]),
            cell_size=float(d["cell_size"]),
            target=BBox(*map(float, d["target"])),
            instruction=instr,
            seed=d.get("seed"),
        )
        if instr.shape != (task.n_cells,) or not np.all(np.isfinite(instr)):
            raise InvalidParameterError(f"task {task.task_id}: instruction must be {task.n_cells} finite values")
        return task


def cell_center(task_or_grid, cell: int) -> Point:
    grid_w, cs = task_or_grid.grid_w, task_or_grid.cell_size
    row, col = divmod(int(cell), grid_w)
    return Point((col + 0.5) * cs, (row + 0.5) * cs)


def cell_of(task_or_grid, p: Point) -> int:
    """Index of the cell containing ``p``, clamped to the screen."""
    cs = task_or_grid.cell_size
    col = min(max(int(math.floor(p.x / cs)), 0), task_or_grid.grid_w - 1)
    row = min(max(int(math.floor(p.y / cs)), 0), task_or_grid.grid_h - 1)
    return row * task_or_grid.grid_w + col


def generate_task(rng: np.random.Generator, config: TaskConfig, task_id: str = "t0", seed=None) -> SyntheticTask:
    config.validate()
    spans = config._spans()
    w = spans[int(rng.integers(len(spans)))]
    h = spans[int(rng.integers(len(spans)))]
    col = int(rng.integers(0, config.grid_w - w + 1))
    row = int(rng.integers(0, config.grid_h - h + 1))
    cs = config.cell_size
    target = BBox(col * cs, row * cs, (col + w) * cs, (row + h) * cs)

    instruction = config.noise * rng.standard_normal(config.n_cells)
    anchor = cell_of(config, Point((target.x1 + target.x2) / 2, (target.y1 + target.y2) / 2))
    instruction[anchor] += 1.0
    return SyntheticTask(task_id, config.grid_w, config.grid_h, cs, target, instruction, seed)


def generate_tasks(n: int, config: TaskConfig, seed: int, prefix: str = "t") -> list[SyntheticTask]:
    config.validate()
    if n < 0:
        raise InvalidConfigError(f"task count must be non-negative, got {n}")
    master = np.random.default_rng(seed)
    seeds = master.integers(0, 2**63 - 1, size=n, dtype=np.int64)
    return [
        generate_task(np.random.default_rng(int(s)), config, f"{prefix}{i}", int(s))
        for i, s in enumerate(seeds)
    ]


def write_tasks(path, tasks) -> None:
    write_jsonl(path, (t.to_dict() for t in tasks))


def read_tasks(path) -> list[SyntheticTask]:
    return read_typed(path, SyntheticTask.from_dict)


# --------------------------------------------------------------------------
# policy

CONF_HEADS = ("full", "quadratic")


@dataclass
class ToyPolicy:
    """Parameters of both heads.

    ``w_cell`` is ``(D, G)`` with no bias, so a hit on one task cannot turn
    into a screen-wide preference for that cell.  The confidence head scores
    each cell from the instruction, the chosen-cell one-hot and the
    instruction value at that cell, in that order (``D + G + 1`` features).
    The default ``"full"`` head maps them to one logit per bin.  The
    ``"quadratic"`` head reduces them (plus an intercept) to one scalar
    ``h_c`` per cell and scores bin ``k`` as ``h_c * c_k - exp(rho) * c_k**2``,
    a discretised bell whose mode sits at ``h_c / (2 exp(rho))``.
    """

    grid_w: int
    grid_h: int
    conf_bins: int
    w_cell: np.ndarray
    w_conf: np.ndarray
    b_conf: np.ndarray
    conf_head: str = "full"

    @classmethod
    def init(cls, grid_w: int, grid_h: int, conf_bins: int = 21, scale: float = 0.0, rng=None,
             cell_gain: float = 0.0, conf_head: str = "full") -> "ToyPolicy":
        """Zero (uniform) or Gaussian-scaled parameters.

        ``cell_gain`` adds ``gain * I`` to the cell head: a policy that already
        reads the instruction, standing in for a supervised cold start.
        """
        if conf_bins < 2:
            raise InvalidParameterError(f"need at least 2 confidence bins, got {conf_bins}")
        if conf_head not in CONF_HEADS:
            raise InvalidParameterError(f"conf_head must be one of {CONF_HEADS}, got {conf_head!r}")
        g = grid_w * grid_h
        shapes = {
            "quadratic": [(g, g), (2 * g + 2,), (1,)],
            "full": [(g, g), (2 * g + 1, conf_bins), (conf_bins,)],
        }[conf_head]
        if scale > 0:
            rng = np.random.default_rng(rng)
            arrays = [scale * rng.standard_normal(s) for s in shapes]
        else:
            arrays = [np.zeros(s) for s in shapes]
        if cell_gain:
            arrays[0] += cell_gain * np.eye(g)
        return cls(grid_w, grid_h, conf_bins, *arrays, conf_head=conf_head)

    @property
    def n_cells(self) -> int:
        return self.grid_w * self.grid_h

    @property
    def dim(self) -> int:
        return self.w_cell.shape[0]

    @property
    def conf_values(self) -> np.ndarray:
        return np.arange(self.conf_bins) / (self.conf_bins - 1)

    def arrays(self) -> tuple[np.ndarray, ...]:
        return (self.w_cell, self.w_conf, self.b_conf)

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def with_flat(self, theta: np.ndarray) -> "ToyPolicy":
        theta = np.asarray(theta, dtype=np.float64)
        out, i = [], 0
        for a in self.arrays():
            out.append(theta[i:i + a.size].reshape(a.shape).copy())
            i += a.size
        if i != theta.size:
            raise InvalidParameterError(f"expected {i} parameters, got {theta.size}")
        return replace(self, w_cell=out[0], w_conf=out[1], b_conf=out[2])

    def copy(self) -> "ToyPolicy":
        return self.with_flat(self.flat())

    def conf_slice(self) -> slice:
        """Location of the confidence-head parameters in :meth:`flat`."""
        start = self.w_cell.size
        return slice(start, start + self.w_conf.size + self.b_conf.size)

    def decode_conf(self, k: int) -> float:
        return k / (self.conf_bins - 1)

    def logits(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        d, g = self.dim, self.n_cells
        z = x @ self.w_cell
        wc = self.w_conf
        cv = self.conf_values
        if self.conf_head == "quadratic":
            h = x @ wc[:d] + wc[d:d + g] + x * wc[d + g] + wc[d + g + 1]
            y = h[:, None] * cv[None, :] - math.exp(self.b_conf[0]) * (cv * cv)[None, :]
        else:
            y = (x @ wc[:d] + self.b_conf)[None, :] + wc[d:d + g] + x[:, None] * wc[d + g][None, :]
        return z, y

    def backward(self, x: np.ndarray, dz: np.ndarray, dy: np.ndarray) -> np.ndarray:
        """Pull logit gradients ``(G,)`` and ``(G, K)`` back to a flat parameter gradient."""
        d, g = self.dim, self.n_cells
        db = dy.sum(axis=0)
        cv = self.conf_values
        if self.conf_head == "quadratic":
            dh = dy @ cv
            g_wconf = np.concatenate([x * dh.sum(), dh, [x @ dh, dh.sum()]])
            db = np.array([-math.exp(self.b_conf[0]) * float(db @ (cv * cv))])
        else:
            g_wconf = np.empty_like(self.w_conf)
            g_wconf[:d] = np.outer(x, db)
            g_wconf[d:d + g] = dy
            g_wconf[d + g] = x @ dy
        return np.concatenate([np.outer(x, dz).ravel(), g_wconf.ravel(), db])


def _check_dims(policy: ToyPolicy, task: SyntheticTask) -> np.ndarray:
    x = np.asarray(task.instruction, dtype=np.float64)
    if (policy.grid_w, policy.grid_h) != (task.grid_w, task.grid_h) or x.shape != (policy.dim,):
        raise InvalidParameterError(
            f"policy for {policy.grid_w}x{policy.grid_h} grid cannot act on task {task.task_id} "
            f"({task.grid_w}x{task.grid_h}, instruction dim {x.shape})")
    return x


def policy_logits(policy: ToyPolicy, task: SyntheticTask) -> tuple[np.ndarray, np.ndarray]:
    """Cell logits ``(G,)`` and per-cell confidence logits ``(G, K)``."""
    return policy.logits(_check_dims(policy, task))


def log_softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    m = np.max(z, axis=axis, keepdims=True)
    s = z - m
    return s - np.log(np.sum(np.exp(s), axis=axis, keepdims=True))


def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    return np.exp(log_softmax(z, axis=axis))


def policy_forward(policy: ToyPolicy, task: SyntheticTask) -> tuple[np.ndarray, np.ndarray]:
    """Cell distribution ``(G,)`` and confidence-bin distribution per cell ``(G, K)``."""
    z, y = policy_logits(policy, task)
    return softmax(z), softmax(y, axis=1)


def policy_log_forward(policy: ToyPolicy, task: SyntheticTask) -> tuple[np.ndarray, np.ndarray]:
    z, y = policy_logits(policy, task)
    return log_softmax(z), log_softmax(y, axis=1)


@dataclass(frozen=True)
class Rollout:
    cell: int
    conf_bin: int
    point: Point
    c_hat: float
    logprob: float
    raw_text: str


def _pick(logits: np.ndarray, temperature: float, rng) -> int:
    if temperature == 0:
        return int(np.argmax(logits))
    probs = softmax(logits / temperature)
    # inverse-CDF draw keeps the random stream to one uniform per choice
    u = rng.random()
    idx = int(np.searchsorted(np.cumsum(probs), u * probs.sum(), side="right"))
    return min(idx, logits.size - 1)


def make_rollout(policy: ToyPolicy, task: SyntheticTask, cell: int, conf_bin: int, logp=None) -> Rollout:
    if logp is None:
        logp = policy_log_forward(policy, task)
    lp_cell, lp_conf = logp
    point = cell_center(task, cell)
    c_hat = policy.decode_conf(conf_bin)
    return Rollout(cell, conf_bin, point, c_hat,
                   float(lp_cell[cell] + lp_conf[cell, conf_bin]), emit_prediction(point, c_hat))


def sample_rollout(policy: ToyPolicy, task: SyntheticTask, temperature: float = 1.0, rng=None, logits=None) -> Rollout:
    """Draw one action; temperature 0 is greedy with ties to the lowest index.

    The recorded log-probability is always under the untempered policy.
    """
    if not (math.isfinite(temperature) and temperature >= 0):
        raise InvalidParameterError(f"temperature must be >= 0, got {temperature}")
    if temperature > 0 and rng is None:
        raise InvalidParameterError("sampling at positive temperature needs an explicit rng")
    z, y = logits if logits is not None else policy_logits(policy, task)
    cell = _pick(z, temperature, rng)
    k = _pick(y[cell], temperature, rng)
    return make_rollout(policy, task, cell, k, (log_softmax(z), log_softmax(y, axis=1)))


# --------------------------------------------------------------------------
# policy files: one JSON header line, then one parameter per line

def save_policy(path, policy: ToyPolicy, meta: dict | None = None) -> None:
    header = {
        "format": POLICY_FORMAT,
        "version": POLICY_VERSION,
        "grid_w": policy.grid_w,
        "grid_h": policy.grid_h,
        "dim": policy.dim,
        "conf_bins": policy.conf_bins,
        "conf_head": policy.conf_head,
        "n_params": int(policy.flat().size),
    }
    if meta:
        header["meta"] = meta
    lines = [json.dumps(header, sort_keys=True)]
    lines.extend(repr(float(v)) for v in policy.flat())
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_policy(path) -> ToyPolicy:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"policy file not found: {path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    try:
        header = json.loads(lines[0])
    except (IndexError, ValueError):
        raise InvalidParameterError(f"{path}: missing policy header") from None
    if header.get("format") != POLICY_FORMAT or header.get("version") != POLICY_VERSION:
        raise InvalidParameterError(f"{path}: unsupported policy format {header.get('format')!r} "
                                    f"version {header.get('version')!r}")
    policy = ToyPolicy.init(header["grid_w"], header["grid_h"], header["conf_bins"],
                            conf_head=header.get("conf_head", "full"))
    theta = np.array([float(v) for v in lines[1:]], dtype=np.float64)
    if theta.size != header["n_params"] or not np.all(np.isfinite(theta)):
        raise InvalidParameterError(f"{path}: expected {header['n_params']} finite parameters, got {theta.size}")
    return policy.with_flat(theta)

"""Target boxes, click points, and the truncated Gaussian confidence field.

The field is centred on the element and its spread follows the element size::

    mu      = ((x1 + x2) / 2, (y1 + y2) / 2)
    sigma_x = alpha * (x2 - x1),   sigma_y = alpha * (y2 - y1)
    C(p)    = exp(-0.5 * [(x - mu_x)^2 / sigma_x^2 + (y - mu_y)^2 / sigma_y^2])

``C`` is the peak-normalised kernel (exactly 1 at the centre).  The truncated
variant is ``C`` strictly inside the box and 0 elsewhere, edges included.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

DEFAULT_ALPHA = 0.25


class InvalidParameterError(ValueError):
    """Raised when an argument violates a documented precondition."""


@dataclass(frozen=True)
class Point:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise InvalidParameterError(f"point coordinates must be finite, got ({self.x}, {self.y})")


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in pixels; (x1, y1) is top-left, (x2, y2) bottom-right."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        coords = (self.x1, self.y1, self.x2, self.y2)
        if not all(math.isfinite(c) for c in coords):
            raise InvalidParameterError(f"bbox coordinates must be finite, got {coords}")
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise InvalidParameterError(f"degenerate bbox {coords}: need x1 < x2 and y1 < y2")

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    def as_list(self) -> list[float]:
        return [self.x1, self.y1, self.x2, self.y2]

    def scaled(self, s: float) -> "BBox":
        return BBox(self.x1 * s, self.y1 * s, self.x2 * s, self.y2 * s)


@dataclass(frozen=True)
class ConfidenceField:
    bbox: BBox
    alpha: float
    mu_x: float = field(init=False)
    mu_y: float = field(init=False)
    sigma_x: float = field(init=False)
    sigma_y: float = field(init=False)

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and self.alpha > 0):
            raise InvalidParameterError(f"alpha must be a positive finite scalar, got {self.alpha}")
        c = center(self.bbox)
        object.__setattr__(self, "mu_x", c.x)
        object.__setattr__(self, "mu_y", c.y)
        object.__setattr__(self, "sigma_x", self.alpha * self.bbox.width)
        object.__setattr__(self, "sigma_y", self.alpha * self.bbox.height)


def center(bbox: BBox) -> Point:
    return Point((bbox.x1 + bbox.x2) / 2, (bbox.y1 + bbox.y2) / 2)


def build_field(bbox: BBox, alpha: float = DEFAULT_ALPHA) -> ConfidenceField:
    return ConfidenceField(bbox, alpha)


def contains(bbox: BBox, p: Point) -> bool:
    """Strict containment; points on an edge are outside."""
    return bbox.x1 < p.x < bbox.x2 and bbox.y1 < p.y < bbox.y2


def gaussian_confidence(fld: ConfidenceField, p: Point) -> float:
    dx = (p.x - fld.mu_x) / fld.sigma_x
    dy = (p.y - fld.mu_y) / fld.sigma_y
    return math.exp(-0.5 * (dx * dx + dy * dy))


def truncated_confidence(fld: ConfidenceField, p: Point) -> float:
    if not contains(fld.bbox, p):
        return 0.0
    return gaussian_confidence(fld, p)

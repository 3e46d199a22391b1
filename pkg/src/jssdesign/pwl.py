"""Piecewise-linear functions and the capacity/approximation formulas.

Covers three relations between PWL targets and ReLU networks: the size
needed to represent a function with ``p`` pieces, the L1 error of
approximating one PWL function by another with fewer pieces, and the width
needed to approximate an L-Lipschitz function to a given accuracy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional, Sequence, Tuple

import numpy as np


@dataclass(frozen=True)
class PwlFunction:
    """Piecewise-linear function on ``[breakpoints[0], breakpoints[-1]]``.

    Piece ``k`` is the affine map through ``(x_k, left[k])`` and
    ``(x_{k+1}, right[k])``. Built with :meth:`from_values` it is continuous;
    :meth:`from_pieces` allows jumps at breakpoints.
    """

    breakpoints: np.ndarray
    left: np.ndarray
    right: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.breakpoints, dtype=float)
        lo = np.asarray(self.left, dtype=float)
        hi = np.asarray(self.right, dtype=float)
        if x.ndim != 1 or x.size < 2:
            raise ValueError("need at least two breakpoints")
        if not (np.diff(x) > 0).all():
            raise ValueError("breakpoints must be strictly increasing")
        if lo.shape != (x.size - 1,) or hi.shape != (x.size - 1,):
            raise ValueError("one left and one right value per piece")
        object.__setattr__(self, "breakpoints", x)
        object.__setattr__(self, "left", lo)
        object.__setattr__(self, "right", hi)

    @classmethod
    def from_values(cls, breakpoints: Sequence[float], values: Sequence[float]) -> "PwlFunction":
        v = np.asarray(values, dtype=float)
        if v.shape != (len(breakpoints),):
            raise ValueError("one value per breakpoint")
        return cls(np.asarray(breakpoints, dtype=float), v[:-1], v[1:])

    @classmethod
    def from_pieces(cls, breakpoints, slopes, intercepts) -> "PwlFunction":
        """Pieces ``y = slope * x + intercept`` on consecutive breakpoint intervals."""
        x = np.asarray(breakpoints, dtype=float)
        a = np.asarray(slopes, dtype=float)
        b = np.asarray(intercepts, dtype=float)
        return cls(x, a * x[:-1] + b, a * x[1:] + b)

    @property
    def pieces(self) -> int:
        return self.breakpoints.size - 1

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.breakpoints)

    @property
    def slopes(self) -> np.ndarray:
        return (self.right - self.left) / self.widths

    @property
    def intercepts(self) -> np.ndarray:
        return self.left - self.slopes * self.breakpoints[:-1]

    @property
    def continuous(self) -> bool:
        return bool(np.allclose(self.right[:-1], self.left[1:]))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        k = np.clip(np.searchsorted(self.breakpoints, x, side="right") - 1, 0, self.pieces - 1)
        return self.slopes[k] * x + self.intercepts[k]


def slope_total_variation(f: PwlFunction) -> float:
    """Sum of absolute slope changes across interior breakpoints."""
    return float(np.abs(np.diff(f.slopes)).sum())


def _abs_affine_integral(a: float, b: float, x0: float, x1: float) -> float:
    """Exact integral of ``|a * x + b|`` over ``[x0, x1]``."""
    v0, v1 = a * x0 + b, a * x1 + b
    if v0 * v1 >= 0:
        return 0.5 * (abs(v0) + abs(v1)) * (x1 - x0)
    root = -b / a
    return 0.5 * abs(v0) * (root - x0) + 0.5 * abs(v1) * (x1 - root)


def l1_distance(f: PwlFunction, g: PwlFunction) -> float:
    """Exact ``integral |f - g|`` over their common domain."""
    if not np.allclose([f.breakpoints[0], f.breakpoints[-1]], [g.breakpoints[0], g.breakpoints[-1]]):
        raise ValueError("functions must share a domain")
    xs = np.union1d(f.breakpoints, g.breakpoints)
    total = 0.0
    for x0, x1 in zip(xs[:-1], xs[1:]):
        mid = 0.5 * (x0 + x1)
        kf = min(np.searchsorted(f.breakpoints, mid) - 1, f.pieces - 1)
        kg = min(np.searchsorted(g.breakpoints, mid) - 1, g.pieces - 1)
        a = f.slopes[kf] - g.slopes[kg]
        b = f.intercepts[kf] - g.intercepts[kg]
        total += _abs_affine_integral(a, b, x0, x1)
    return total


def check_admissible(f_p: PwlFunction, f_q: PwlFunction, rtol: float = 1e-9) -> None:
    """Raise unless ``f_q`` meets the hypotheses of the approximation bound.

    ``f_q`` must have no more pieces than ``f_p`` and share its domain. Each
    of its pieces may overlap at most two pieces of ``f_p``, and must agree
    in value and slope with one of them, i.e. lie on the same line.
    """
    if f_q.pieces > f_p.pieces:
        raise ValueError("approximant has more pieces than the target")
    if not np.allclose([f_p.breakpoints[0], f_p.breakpoints[-1]], [f_q.breakpoints[0], f_q.breakpoints[-1]]):
        raise ValueError("functions must share a domain")
    xp = f_p.breakpoints
    scale = max(1.0, float(np.abs(f_p.left).max()), float(np.abs(f_p.right).max()))
    for k in range(f_q.pieces):
        lo, hi = f_q.breakpoints[k], f_q.breakpoints[k + 1]
        touched = [i for i in range(f_p.pieces) if min(hi, xp[i + 1]) - max(lo, xp[i]) > 0]
        if len(touched) > 2:
            raise ValueError(f"approximant piece {k} overlaps {len(touched)} target pieces")
        on_line = any(
            np.isclose(f_q.slopes[k], f_p.slopes[i], rtol=rtol, atol=rtol * scale)
            and np.isclose(f_q.intercepts[k], f_p.intercepts[i], rtol=rtol, atol=rtol * scale)
            for i in touched
        )
        if not on_line:
            raise ValueError(f"approximant piece {k} does not coincide with any overlapped target piece")


def approximation_bound(f_p: PwlFunction, f_q: PwlFunction) -> Tuple[float, float]:
    """``(bound, actual)`` for approximating ``f_p`` by the coarser ``f_q``.

    ``bound`` is half the squared widest piece of ``f_p`` times its slope
    total variation. ``actual`` is the exact L1 distance. For admissible
    pairs ``actual <= bound``.
    """
    check_admissible(f_p, f_q)
    bound = 0.5 * float(f_p.widths.max()) ** 2 * slope_total_variation(f_p)
    return bound, l1_distance(f_p, f_q)


def merge_approximant(f_p: PwlFunction, rng: np.random.Generator) -> PwlFunction:
    """Random admissible coarsening of ``f_p``.

    Adjacent pieces are merged in pairs at random. A merged piece extends the
    line of one of its two members, chosen at random, over both.
    """
    xs, slopes, intercepts = [f_p.breakpoints[0]], [], []
    k = 0
    while k < f_p.pieces:
        if k + 1 < f_p.pieces and rng.random() < 0.5:
            keep = k + int(rng.integers(2))
            xs.append(f_p.breakpoints[k + 2])
            k += 2
        else:
            keep = k
            xs.append(f_p.breakpoints[k + 1])
            k += 1
        slopes.append(f_p.slopes[keep])
        intercepts.append(f_p.intercepts[keep])
    return PwlFunction.from_pieces(xs, slopes, intercepts)


def random_pwl(rng: np.random.Generator, max_pieces: int = 8) -> PwlFunction:
    p = int(rng.integers(1, max_pieces + 1))
    x = np.concatenate([[0.0], np.cumsum(rng.uniform(0.1, 2.0, size=p))])
    return PwlFunction.from_values(x, rng.normal(size=p + 1) * 3)


def relu_capacity(p: int, k: int) -> Tuple[float, Callable[[float], float]]:
    """Minimum size of a depth ``k + 1`` ReLU net with ``p`` pieces, and the
    piece count reachable with size ``s`` as a function of ``s``."""
    if p < 1 or k < 1:
        raise ValueError("p and k must be >= 1")
    min_size = 0.5 * k * p ** (1.0 / k) - 1
    return min_size, lambda s: (2.0 * s / k) ** k


def lipschitz_capacity(n: int, L: float, eps: float) -> int:
    """Width ``C(n + ceil(3L/eps), n)`` of a one-hidden-layer approximant."""
    if n < 1 or L < 0 or not eps > 0:
        raise ValueError("need n >= 1, L >= 0 and eps > 0")
    # decimal strings keep 3L/eps exact for values like 0.1
    ratio = 3 * Fraction(repr(float(L))) / Fraction(repr(float(eps)))
    return math.comb(n + math.ceil(ratio), n)


def trajectory_functions(solutions: np.ndarray) -> list:
    """One PWL function per solution coordinate over the family index."""
    y = np.asarray(solutions, dtype=float)
    idx = np.arange(y.shape[0], dtype=float)
    return [PwlFunction.from_values(idx, y[:, c]) for c in range(y.shape[1])]


def trajectory_slope_variation(solutions: np.ndarray) -> float:
    return sum(slope_total_variation(f) for f in trajectory_functions(solutions))

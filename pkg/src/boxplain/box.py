"""Interval arithmetic and box propagation of neuron bounds.

The propagation treats every neuron input as an independent interval, so the
result is a sound enclosure of the reachable values (up to float rounding)
but generally wider than the true range.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .model import InputDomain, Network


@dataclass(frozen=True)
class Interval:
    """Closed real interval [lb, ub]; both endpoints finite."""

    lb: float
    ub: float

    def __post_init__(self):
        if not (math.isfinite(self.lb) and math.isfinite(self.ub)):
            raise ValueError(f"interval endpoints must be finite: [{self.lb}, {self.ub}]")
        if self.lb > self.ub:
            raise ValueError(f"empty interval: [{self.lb}, {self.ub}]")

    def contains(self, value: float, tol: float = 0.0) -> bool:
        return self.lb - tol <= value <= self.ub + tol

    def encloses(self, other: "Interval", tol: float = 0.0) -> bool:
        return self.lb - tol <= other.lb and other.ub <= self.ub + tol


def iv_add(a: Interval, b: Interval) -> Interval:
    return Interval(a.lb + b.lb, a.ub + b.ub)


def iv_scale(c: float, a: Interval) -> Interval:
    """Scaling by a negative constant swaps and negates the endpoints."""
    if c >= 0.0:
        return Interval(c * a.lb, c * a.ub)
    return Interval(c * a.ub, c * a.lb)


def iv_relu(a: Interval) -> Interval:
    return Interval(max(a.lb, 0.0), max(a.ub, 0.0))


def affine_bounds(weights, bias: float, inputs: Sequence[Interval]) -> Interval:
    """Interval image of ``bias + sum(w_i * inputs_i)`` under independent inputs."""
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (len(inputs),):
        raise ValueError(f"{weights.shape[0]} weights for {len(inputs)} input intervals")
    acc = Interval(float(bias), float(bias))
    for w, iv in zip(weights, inputs):
        acc = iv_add(acc, iv_scale(float(w), iv))
    return acc


@dataclass(frozen=True)
class AttributeAssignment:
    """Per input attribute: a pinned value or None for a free attribute."""

    values: tuple

    @classmethod
    def all_free(cls, n: int) -> "AttributeAssignment":
        return cls((None,) * n)

    @classmethod
    def fixing(cls, n: int, fixed: Mapping[int, float]) -> "AttributeAssignment":
        vals = [None] * n
        for i, v in fixed.items():
            vals[i] = float(v)
        return cls(tuple(vals))

    @classmethod
    def from_instance(cls, instance, fixed_indices: Iterable[int]) -> "AttributeAssignment":
        instance = np.asarray(instance, dtype=np.float64)
        vals = [None] * instance.shape[0]
        for i in fixed_indices:
            vals[i] = float(instance[i])
        return cls(tuple(vals))

    @property
    def size(self) -> int:
        return len(self.values)

    @property
    def fixed_indices(self) -> tuple[int, ...]:
        return tuple(i for i, v in enumerate(self.values) if v is not None)

    def validate(self, domain: InputDomain) -> None:
        if self.size != domain.size:
            raise ValueError(f"assignment covers {self.size} attributes, domain has {domain.size}")
        for i, v in enumerate(self.values):
            if v is not None and not (domain.lows[i] <= v <= domain.highs[i]):
                raise ValueError(
                    f"attribute {i}: fixed value {v} outside domain "
                    f"[{domain.lows[i]}, {domain.highs[i]}]"
                )

    def input_intervals(self, domain: InputDomain) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array(domain.lows, dtype=np.float64)
        hi = np.array(domain.highs, dtype=np.float64)
        for i, v in enumerate(self.values):
            if v is not None:
                lo[i] = hi[i] = v
        return lo, hi


@dataclass(frozen=True)
class BoundsMap:
    """Per-neuron interval bounds: inputs, hidden pre/post, outputs.

    Hidden-layer arrays are indexed 0..L-2 in network order; each entry is a
    vector over that layer's neurons.
    """

    input_lo: np.ndarray
    input_hi: np.ndarray
    pre_lo: tuple[np.ndarray, ...]
    pre_hi: tuple[np.ndarray, ...]
    post_lo: tuple[np.ndarray, ...]
    post_hi: tuple[np.ndarray, ...]
    out_lo: np.ndarray
    out_hi: np.ndarray

    def __post_init__(self):
        for arr in (self.input_lo, self.input_hi, self.out_lo, self.out_hi,
                    *self.pre_lo, *self.pre_hi, *self.post_lo, *self.post_hi):
            arr.setflags(write=False)

    @property
    def num_hidden_layers(self) -> int:
        return len(self.pre_lo)

    def hidden_pre(self, layer: int, j: int) -> Interval:
        return Interval(float(self.pre_lo[layer][j]), float(self.pre_hi[layer][j]))

    def hidden_post(self, layer: int, j: int) -> Interval:
        return Interval(float(self.post_lo[layer][j]), float(self.post_hi[layer][j]))

    def output(self, j: int) -> Interval:
        return Interval(float(self.out_lo[j]), float(self.out_hi[j]))

    def shapes_match(self, net: Network) -> bool:
        if self.input_lo.shape != (net.input_dim,):
            return False
        widths = net.hidden_widths
        if len(self.pre_lo) != len(widths):
            return False
        if any(self.pre_lo[i].shape != (w,) for i, w in enumerate(widths)):
            return False
        return self.out_lo.shape == (net.class_count,)

    def allclose(self, other: "BoundsMap", tol: float = 0.0) -> bool:
        pairs = [(self.input_lo, other.input_lo), (self.input_hi, other.input_hi),
                 (self.out_lo, other.out_lo), (self.out_hi, other.out_hi)]
        pairs += list(zip(self.pre_lo, other.pre_lo)) + list(zip(self.pre_hi, other.pre_hi))
        pairs += list(zip(self.post_lo, other.post_lo)) + list(zip(self.post_hi, other.post_hi))
        return all(a.shape == b.shape and np.abs(a - b).max(initial=0.0) <= tol
                   for a, b in pairs)


class ShortcutResult(enum.Enum):
    REMOVABLE = "removable"
    INCONCLUSIVE = "inconclusive"


def _affine_box(weights: np.ndarray, biases: np.ndarray,
                lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    w_pos = np.maximum(weights, 0.0)
    w_neg = np.minimum(weights, 0.0)
    new_lo = w_pos @ lo + w_neg @ hi + biases
    new_hi = w_pos @ hi + w_neg @ lo + biases
    return new_lo, new_hi


def box_propagate(net: Network, assign: AttributeAssignment,
                  domain: InputDomain) -> BoundsMap:
    """Push input intervals through the network layer by layer.

    Fixed attributes become point intervals, free ones take their domain
    range.  Hidden layers apply the affine map then clip at zero; the output
    layer stays affine.
    """
    assign.validate(domain)
    lo, hi = assign.input_intervals(domain)
    input_lo, input_hi = lo.copy(), hi.copy()
    pre_lo, pre_hi, post_lo, post_hi = [], [], [], []
    for layer in net.hidden_layers:
        zl, zh = _affine_box(layer.weights, layer.biases, lo, hi)
        pre_lo.append(zl)
        pre_hi.append(zh)
        lo, hi = np.maximum(zl, 0.0), np.maximum(zh, 0.0)
        post_lo.append(lo)
        post_hi.append(hi)
    out = net.layers[-1]
    out_lo, out_hi = _affine_box(out.weights, out.biases, lo, hi)
    return BoundsMap(input_lo, input_hi,
                     tuple(pre_lo), tuple(pre_hi),
                     tuple(post_lo), tuple(post_hi),
                     out_lo, out_hi)


def shortcut_check(bounds: BoundsMap, target: int) -> ShortcutResult:
    """Removable iff the target output's lower bound strictly beats every
    rival output's upper bound.  The comparison is exact: a tie falls through
    to the solver."""
    k = bounds.out_lo.shape[0]
    if not 0 <= target < k:
        raise ValueError(f"target class {target} out of range for {k} outputs")
    target_lb = bounds.out_lo[target]
    for j in range(k):
        if j != target and not (target_lb > bounds.out_hi[j]):
            return ShortcutResult.INCONCLUSIVE
    return ShortcutResult.REMOVABLE

"""Minimal sufficient-attribute explanations for network predictions.

Two modes share one deletion loop over the input attributes.  The baseline
consults the solver for every attribute against the original tight bounds.
The improved mode first propagates boxes for the candidate assignment: when
the target output provably dominates, the attribute drops without a solver
call; otherwise the box bounds tighten and simplify the encoding before the
solver runs.  Bounds always revert to the originals between attributes, so
every iteration starts from the same base problem.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .box import (AttributeAssignment, BoundsMap, ShortcutResult, box_propagate,
                  shortcut_check)
from .bnb import (SAT, UNKNOWN, UNSAT, BranchAndBoundBackend, MilpOutcome,
                  SolverBackend)
from .encoding import (MilpProblem, attach_rival_query, encode_network,
                       encode_prefix, fix_attributes, tighten_and_simplify)
from .model import InputDomain, Network, batch_outputs, forward

MODE_BASELINE = "baseline"
MODE_IMPROVED = "improved"

TIGHT_MILP = "milp"
TIGHT_BOX = "box"


class PredictionTieError(ValueError):
    """The instance's top two outputs are exactly equal; there is no unique
    predicted class to explain."""


class Decision(enum.Enum):
    REMOVED_BY_BOX = "RemovedByBox"
    REMOVED_BY_SOLVER = "RemovedBySolver"
    KEPT_BY_SOLVER = "KeptBySolver"
    KEPT_BY_TIMEOUT = "KeptByTimeout"


@dataclass(frozen=True)
class Explanation:
    """Attributes that, held at their instance values, force the prediction."""

    kept: tuple  # ((attribute index, value), ...) in iteration order
    decisions: dict  # attribute index -> Decision
    target: int

    @property
    def kept_indices(self) -> tuple:
        return tuple(i for i, _ in self.kept)


@dataclass(frozen=True)
class ExplainStats:
    """Run counters.

    The raw ``*_count`` fields accumulate over solver-bound iterations only
    (each neuron or binary is counted once per such iteration), so several
    runs can be pooled before forming percentages; the ``*_pct`` fields are
    this run's own ratios, 0 when the solver was never needed.
    """

    total_time: float
    solver_time: float
    solver_calls: int
    box_shortcut_hits: int
    timeouts: int
    tightened_count: int
    neurons_counted: int
    removed_before_count: int
    removed_ours_count: int
    binaries_counted: int
    bounds_tightened_pct: float
    bin_vars_removed_before_pct: float
    bin_vars_removed_ours_pct: float

    def __post_init__(self):
        if self.solver_time > self.total_time + 1e-9:
            raise ValueError("solver time exceeds total time")


@dataclass(frozen=True)
class EngineConfig:
    tight_bounds_mode: str = TIGHT_MILP
    order: Optional[tuple] = None  # permutation of attribute indices, or None
    feas_tol: float = 1e-6
    pivot_tol: float = 1e-9
    integrality_tol: float = 1e-6
    time_budget_ms: Optional[float] = None
    backend: Optional[SolverBackend] = None

    def resolve_backend(self) -> SolverBackend:
        if self.backend is not None:
            return self.backend
        return BranchAndBoundBackend(self.feas_tol, self.pivot_tol,
                                     self.integrality_tol)

    def resolve_order(self, n: int) -> tuple:
        if self.order is None:
            return tuple(range(n))
        order = tuple(int(i) for i in self.order)
        if sorted(order) != list(range(n)):
            raise ValueError(f"order must be a permutation of 0..{n - 1}")
        return order


class _Accounting:
    __slots__ = ("calls", "time")

    def __init__(self):
        self.calls = 0
        self.time = 0.0

    def add(self, outcome: MilpOutcome) -> None:
        self.calls += 1
        self.time += outcome.wall_time


def compute_tight_bounds(net: Network, domain: InputDomain,
                         mode: str = TIGHT_MILP,
                         backend: Optional[SolverBackend] = None) -> BoundsMap:
    """Per-neuron bounds over the whole input domain.

    ``milp`` optimizes each pre-activation exactly, layer by layer, reusing
    the bounds already proven for earlier layers as big-M constants.  ``box``
    falls back to plain interval propagation.
    """
    all_free = AttributeAssignment.all_free(net.input_dim)
    boxed = box_propagate(net, all_free, domain)
    if mode == TIGHT_BOX:
        return boxed
    if mode != TIGHT_MILP:
        raise ValueError(f"unknown tight-bounds mode {mode!r}")
    backend = backend or BranchAndBoundBackend()

    pre_lo = [np.zeros(w) for w in net.hidden_widths]
    pre_hi = [np.zeros(w) for w in net.hidden_widths]
    post_lo = [np.zeros(w) for w in net.hidden_widths]
    post_hi = [np.zeros(w) for w in net.hidden_widths]
    out_lo = np.zeros(net.class_count)
    out_hi = np.zeros(net.class_count)

    def working_map() -> BoundsMap:
        return BoundsMap(boxed.input_lo.copy(), boxed.input_hi.copy(),
                         tuple(a.copy() for a in pre_lo),
                         tuple(a.copy() for a in pre_hi),
                         tuple(a.copy() for a in post_lo),
                         tuple(a.copy() for a in post_hi),
                         np.full(net.class_count, -np.inf),
                         np.full(net.class_count, np.inf))

    def prev_vids(problem: MilpProblem, layer: int) -> Sequence[int]:
        if layer == 0:
            return problem.input_vids
        width = net.hidden_widths[layer - 1]
        return [problem.block(layer - 1, j).post_var for j in range(width)]

    def optimize_affine(problem, vids, weights, bias) -> tuple[float, float]:
        objective = {vid: float(w) for vid, w in zip(vids, weights) if w != 0.0}
        lo_out = backend.optimize(problem, objective, "min")
        hi_out = backend.optimize(problem, objective, "max")
        if lo_out.status != "optimal" or hi_out.status != "optimal":
            raise RuntimeError(
                f"bound optimization failed: {lo_out.status}/{hi_out.status}")
        return lo_out.value + bias, hi_out.value + bias

    for l, layer in enumerate(net.hidden_layers):
        prefix = encode_prefix(net, working_map(), l)
        vids = prev_vids(prefix, l)
        for j in range(layer.width):
            lo, hi = optimize_affine(prefix, vids, layer.weights[j],
                                     float(layer.biases[j]))
            pre_lo[l][j], pre_hi[l][j] = lo, hi
            post_lo[l][j], post_hi[l][j] = max(lo, 0.0), max(hi, 0.0)

    out_layer = net.layers[-1]
    prefix = encode_prefix(net, working_map(), len(net.hidden_layers))
    vids = prev_vids(prefix, len(net.hidden_layers))
    for j in range(out_layer.width):
        out_lo[j], out_hi[j] = optimize_affine(prefix, vids, out_layer.weights[j],
                                               float(out_layer.biases[j]))

    return BoundsMap(boxed.input_lo.copy(), boxed.input_hi.copy(),
                     tuple(pre_lo), tuple(pre_hi),
                     tuple(post_lo), tuple(post_hi), out_lo, out_hi)


def is_entailed(problem: MilpProblem, target: int, *,
                backend: Optional[SolverBackend] = None,
                time_budget_ms: Optional[float] = None,
                accounting: Optional[_Accounting] = None):
    """Check that the target class wins for every point feasible in ``problem``.

    ``problem`` must already have its attributes fixed.  Runs one rival
    feasibility query per other class, stopping at the first counterexample.
    Returns ``(True, None)``, ``(False, witness)``, or ``(None, None)`` when
    a time budget ran out before a decision.
    """
    backend = backend or BranchAndBoundBackend()
    k = len(problem.output_vids)
    if not 0 <= target < k:
        raise ValueError(f"target class {target} out of range")
    for rival in range(k):
        if rival == target:
            continue
        query = attach_rival_query(problem, target, rival)
        outcome = backend.feasibility(query, time_budget_ms=time_budget_ms)
        if accounting is not None:
            accounting.add(outcome)
        if outcome.status == SAT:
            return False, outcome.witness
        if outcome.status == UNKNOWN:
            return None, None
        if outcome.status != UNSAT:
            raise RuntimeError(f"unexpected solver status {outcome.status!r}")
    return True, None


class Explainer:
    """Shared per-network state: tight bounds and the base encoding.

    Immutable once constructed; explain() never mutates it, so one Explainer
    can serve many instances (and threads) of the same network.
    """

    def __init__(self, net: Network, domain: InputDomain,
                 config: Optional[EngineConfig] = None,
                 tight: Optional[BoundsMap] = None):
        self.net = net
        self.domain = domain
        self.config = config or EngineConfig()
        self.backend = self.config.resolve_backend()
        if tight is None:
            tight = compute_tight_bounds(net, domain,
                                         self.config.tight_bounds_mode,
                                         self.backend)
        self.tight = tight
        self.base_problem = encode_network(net, tight)

    def explain(self, instance, mode: str = MODE_IMPROVED):
        """Run the deletion loop and return ``(Explanation, ExplainStats)``.

        When attribute i is tested, exactly the attributes already removed
        plus i are freed; everything else stays at its instance value.  An
        exact-tie prediction raises PredictionTieError: there is no unique
        class to explain.
        """
        if mode not in (MODE_BASELINE, MODE_IMPROVED):
            raise ValueError(f"unknown mode {mode!r}")
        net = self.net
        instance = np.asarray(instance, dtype=np.float64)
        if not self.domain.contains(instance):
            raise ValueError("instance lies outside the input domain")
        outputs = forward(net, instance).outputs
        target = int(np.argmax(outputs))
        runners_up = np.delete(outputs, target)
        if runners_up.size and outputs[target] == runners_up.max():
            raise PredictionTieError(
                "instance prediction is an exact tie; no unique class to explain")

        start = time.perf_counter()
        order = self.config.resolve_order(net.input_dim)
        accounting = _Accounting()
        removed: set[int] = set()
        decisions: dict[int, Decision] = {}
        box_hits = 0
        timeouts = 0
        # per solver-bound iteration accumulators
        tightened_sum = neurons_sum = 0
        removed_ours_sum = removed_before_sum = binaries_sum = 0

        for i in order:
            fixed = [j for j in range(net.input_dim) if j != i and j not in removed]
            assign = AttributeAssignment.from_instance(instance, fixed)
            if mode == MODE_IMPROVED:
                boxed = box_propagate(net, assign, self.domain)
                if shortcut_check(boxed, target) is ShortcutResult.REMOVABLE:
                    removed.add(i)
                    decisions[i] = Decision.REMOVED_BY_BOX
                    box_hits += 1
                    continue
                problem, simp = tighten_and_simplify(self.base_problem,
                                                     self.tight, boxed)
                tightened_sum += simp.bounds_tightened_count
                neurons_sum += simp.neurons_total
                removed_ours_sum += simp.binary_removed_count
                removed_before_sum += self.base_problem.encode_stats.binary_removed_count
                binaries_sum += simp.binary_total
            else:
                problem = self.base_problem
            problem = fix_attributes(problem, assign)
            entailed, _ = is_entailed(problem, target, backend=self.backend,
                                      time_budget_ms=self.config.time_budget_ms,
                                      accounting=accounting)
            if entailed is None:
                decisions[i] = Decision.KEPT_BY_TIMEOUT
                timeouts += 1
            elif entailed:
                removed.add(i)
                decisions[i] = Decision.REMOVED_BY_SOLVER
            else:
                decisions[i] = Decision.KEPT_BY_SOLVER

        kept = tuple((i, float(instance[i])) for i in order if i not in removed)
        total_time = time.perf_counter() - start
        stats = ExplainStats(
            total_time=total_time,
            solver_time=min(accounting.time, total_time),
            solver_calls=accounting.calls,
            box_shortcut_hits=box_hits,
            timeouts=timeouts,
            tightened_count=tightened_sum,
            neurons_counted=neurons_sum,
            removed_before_count=removed_before_sum,
            removed_ours_count=removed_ours_sum,
            binaries_counted=binaries_sum,
            bounds_tightened_pct=_pct(tightened_sum, neurons_sum),
            bin_vars_removed_before_pct=_pct(removed_before_sum, binaries_sum),
            bin_vars_removed_ours_pct=_pct(removed_ours_sum, binaries_sum),
        )
        return Explanation(kept, decisions, target), stats


def _pct(num: int, den: int) -> float:
    return 100.0 * num / den if den else 0.0


def explain_baseline(net: Network, instance, domain: InputDomain,
                     config: Optional[EngineConfig] = None):
    """Deletion loop with a solver check per attribute, original bounds only."""
    return Explainer(net, domain, config).explain(instance, MODE_BASELINE)


def explain_improved(net: Network, instance, domain: InputDomain,
                     config: Optional[EngineConfig] = None):
    """Deletion loop with the box shortcut and per-attribute simplification."""
    return Explainer(net, domain, config).explain(instance, MODE_IMPROVED)


@dataclass(frozen=True)
class VerificationReport:
    target: int
    samples: int
    sufficiency_violations: tuple  # ((point...), predicted) per violation
    minimality: dict  # attribute index -> confirmed | violated | unverified

    @property
    def sufficiency_ok(self) -> bool:
        return not self.sufficiency_violations

    @property
    def minimality_ok(self) -> bool:
        return all(v != "violated" for v in self.minimality.values())

    @property
    def unverified(self) -> tuple:
        return tuple(i for i, v in sorted(self.minimality.items())
                     if v == "unverified")

    @property
    def ok(self) -> bool:
        return self.sufficiency_ok and self.minimality_ok


def verify_explanation(net: Network, instance, explanation: Explanation,
                       domain: InputDomain, samples: int = 1000, *,
                       rng=None, backend: Optional[SolverBackend] = None,
                       base_problem: Optional[MilpProblem] = None) -> VerificationReport:
    """Independent checks of an explanation.

    Sufficiency: random completions of the free attributes must all predict
    the target class.  Minimality: re-freeing each solver-kept attribute must
    admit a counterexample whose forward evaluation puts some rival at or
    above the target (within 1e-6).  Timeout-kept attributes are reported
    unverified.  When no base problem is supplied the check encodes the
    network with box bounds, which is exact for feasibility and needs no
    bound precomputation.
    """
    rng = np.random.default_rng(rng)
    backend = backend or BranchAndBoundBackend()
    instance = np.asarray(instance, dtype=np.float64)
    n = net.input_dim
    kept_map = dict(explanation.kept)

    points = rng.uniform(domain.lows, domain.highs, size=(samples, n))
    for i, v in kept_map.items():
        points[:, i] = v
    predictions = np.argmax(batch_outputs(net, points), axis=1)
    bad = np.nonzero(predictions != explanation.target)[0]
    violations = tuple((tuple(points[r]), int(predictions[r])) for r in bad[:20])

    if base_problem is None:
        all_free = AttributeAssignment.all_free(n)
        base_problem = encode_network(net, box_propagate(net, all_free, domain))

    minimality: dict[int, str] = {}
    for i, decision in explanation.decisions.items():
        if decision is Decision.KEPT_BY_TIMEOUT:
            minimality[i] = "unverified"
            continue
        if decision is not Decision.KEPT_BY_SOLVER:
            continue
        fixed = [j for j in kept_map if j != i]
        assign = AttributeAssignment.from_instance(instance, fixed)
        problem = fix_attributes(base_problem, assign)
        entailed, witness = is_entailed(problem, explanation.target,
                                        backend=backend)
        if entailed is False and witness is not None:
            outs = forward(net, witness).outputs
            rivals = np.delete(outs, explanation.target)
            gap = rivals.max() - outs[explanation.target]
            minimality[i] = "confirmed" if gap >= -1e-6 else "violated"
        else:
            minimality[i] = "violated"
    return VerificationReport(explanation.target, samples, violations, minimality)

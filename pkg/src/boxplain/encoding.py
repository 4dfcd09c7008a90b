"""Linear-constraint encoding of ReLU networks with indicator binaries.

Every hidden neuron with pre-activation bounds [lb, ub] straddling zero gets
one binary z and three rows:

    post - w.prev - lb*z <= b - lb      (upper side, active branch)
    post - w.prev       >= b            (lower side)
    post - ub*z         <= 0            (upper side, indicator)

together with the variable bound post >= 0.  A neuron whose bounds prove it
always active (lb > 0) collapses to the plain affine equality and drops the
binary; always-inactive (ub <= 0) collapses to post = 0, carried as the
variable bounds [0, 0].  Output neurons are affine equalities.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .box import AttributeAssignment, BoundsMap
from .model import Network

logger = logging.getLogger(__name__)

CONTINUOUS = "continuous"
BINARY = "binary"

LE = "<="
GE = ">="
EQ = "=="

# constraint origin tags
RELU_UPPER_ACTIVE = "relu-upper-active"
RELU_LOWER = "relu-lower"
RELU_UPPER_INDICATOR = "relu-upper-indicator"
RELU_EQ_ACTIVE = "relu-eq-active"
OUTPUT_AFFINE = "output-affine"
QUERY = "query"

MODE_SPLIT = "split"
MODE_ACTIVE = "active"
MODE_INACTIVE = "inactive"

INF = float("inf")


@dataclass(frozen=True)
class Variable:
    vid: int
    name: str
    kind: str  # continuous | binary
    lb: float
    ub: float
    role: tuple  # ("input", i) | ("post", l, j) | ("z", l, j) | ("output", j)


@dataclass(frozen=True)
class LinearConstraint:
    coeffs: tuple  # ((vid, coef), ...) sorted by vid
    relation: str  # <= | >= | ==
    rhs: float
    origin: str

    def coef_map(self) -> dict:
        return dict(self.coeffs)


@dataclass(frozen=True)
class NeuronBlock:
    """Bookkeeping for one hidden neuron's variables, rows and bounds."""

    layer: int  # 0-based hidden layer
    index: int
    post_var: int
    z_var: Optional[int]
    mode: str  # split | active | inactive
    pre_lb: float
    pre_ub: float
    constraint_ids: tuple


@dataclass(frozen=True)
class SimplificationStats:
    """Counters behind the bounds-tightened / binaries-removed percentages."""

    neurons_total: int
    bounds_tightened_count: int
    binary_total: int
    binary_removed_count: int

    def __post_init__(self):
        if self.bounds_tightened_count > self.neurons_total:
            raise ValueError("tightened count exceeds neuron total")
        if self.binary_removed_count > self.binary_total:
            raise ValueError("removed count exceeds binary total")


@dataclass(frozen=True)
class MilpProblem:
    """Immutable encoded problem; transformations return new values."""

    net: Network
    variables: tuple
    constraints: tuple
    blocks: tuple  # NeuronBlock per hidden neuron, layer-major
    input_vids: tuple
    output_vids: tuple
    encode_stats: SimplificationStats

    def block(self, layer: int, index: int) -> NeuronBlock:
        for blk in self.blocks:
            if blk.layer == layer and blk.index == index:
                return blk
        raise KeyError((layer, index))

    @property
    def binary_vids(self) -> tuple:
        return tuple(v.vid for v in self.variables if v.kind == BINARY)

    def bounds_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        lbs = np.array([v.lb for v in self.variables], dtype=np.float64)
        ubs = np.array([v.ub for v in self.variables], dtype=np.float64)
        return lbs, ubs


def _structural_layout(net: Network) -> tuple[dict, tuple, tuple]:
    """Fixed vids for inputs, hidden posts and outputs, independent of which
    neurons carry a binary.  Binaries always number after the structural vars."""
    post_vid = {}
    vid = net.input_dim
    for l, width in enumerate(net.hidden_widths):
        for j in range(width):
            post_vid[(l, j)] = vid
            vid += 1
    input_vids = tuple(range(net.input_dim))
    output_vids = tuple(range(vid, vid + net.class_count))
    return post_vid, input_vids, output_vids


def _encode(net: Network, bounds: BoundsMap,
            input_bounds: Optional[tuple[np.ndarray, np.ndarray]] = None,
            extra_rows: tuple = (),
            hidden_scope: Optional[int] = None,
            with_outputs: bool = True) -> MilpProblem:
    """Shared encoder.  ``hidden_scope`` limits how many hidden layers get
    rows (later posts stay as inert variables); prefix problems for bound
    optimization drop the output rows entirely."""
    if not bounds.shapes_match(net):
        raise ValueError("bounds map does not match network shape")
    if hidden_scope is None:
        hidden_scope = len(net.hidden_layers)
    post_vid, input_vids, output_vids = _structural_layout(net)
    n_struct = net.input_dim + net.num_hidden_neurons + net.class_count

    in_lo = bounds.input_lo if input_bounds is None else input_bounds[0]
    in_hi = bounds.input_hi if input_bounds is None else input_bounds[1]

    variables: list[Optional[Variable]] = [None] * n_struct
    for i in range(net.input_dim):
        variables[i] = Variable(i, f"x{i}", CONTINUOUS,
                                float(in_lo[i]), float(in_hi[i]), ("input", i))
    for j, vid in enumerate(output_vids):
        if with_outputs:
            variables[vid] = Variable(vid, f"o{j}", CONTINUOUS,
                                      float(bounds.out_lo[j]), float(bounds.out_hi[j]),
                                      ("output", j))
        else:
            variables[vid] = Variable(vid, f"o{j}", CONTINUOUS, -INF, INF,
                                      ("output", j))
    for l, width in enumerate(net.hidden_widths):
        if l < hidden_scope:
            continue
        for j in range(width):
            vid = post_vid[(l, j)]
            variables[vid] = Variable(vid, f"h{l}_{j}", CONTINUOUS, 0.0, INF,
                                      ("post", l, j))

    constraints: list[LinearConstraint] = []
    blocks: list[NeuronBlock] = []
    removed_at_encode = 0
    next_vid = n_struct

    def prev_vid(layer: int, i: int) -> int:
        return i if layer == 0 else post_vid[(layer - 1, i)]

    for l, layer in enumerate(net.hidden_layers[:hidden_scope]):
        for j in range(layer.width):
            vid = post_vid[(l, j)]
            lb = float(bounds.pre_lo[l][j])
            ub = float(bounds.pre_hi[l][j])
            w = layer.weights[j]
            b = float(layer.biases[j])
            row_ids: list[int] = []
            wcoefs = tuple((prev_vid(l, i), -float(w[i]))
                           for i in range(layer.fan_in) if w[i] != 0.0)
            if ub <= 0.0:
                mode, z_var = MODE_INACTIVE, None
                removed_at_encode += 1
                variables[vid] = Variable(vid, f"h{l}_{j}", CONTINUOUS, 0.0, 0.0,
                                          ("post", l, j))
            elif lb > 0.0:
                mode, z_var = MODE_ACTIVE, None
                removed_at_encode += 1
                variables[vid] = Variable(vid, f"h{l}_{j}", CONTINUOUS, lb, ub,
                                          ("post", l, j))
                row_ids.append(len(constraints))
                constraints.append(LinearConstraint(
                    tuple(sorted(wcoefs + ((vid, 1.0),))), EQ, b, RELU_EQ_ACTIVE))
            else:
                mode = MODE_SPLIT
                z_var = next_vid
                next_vid += 1
                variables[vid] = Variable(vid, f"h{l}_{j}", CONTINUOUS, 0.0, ub,
                                          ("post", l, j))
                variables.append(Variable(z_var, f"z{l}_{j}", BINARY, 0.0, 1.0,
                                          ("z", l, j)))
                row_ids.append(len(constraints))
                constraints.append(LinearConstraint(
                    tuple(sorted(wcoefs + ((vid, 1.0), (z_var, -lb)))),
                    LE, b - lb, RELU_UPPER_ACTIVE))
                row_ids.append(len(constraints))
                constraints.append(LinearConstraint(
                    tuple(sorted(wcoefs + ((vid, 1.0),))), GE, b, RELU_LOWER))
                row_ids.append(len(constraints))
                constraints.append(LinearConstraint(
                    ((vid, 1.0), (z_var, -ub)), LE, 0.0, RELU_UPPER_INDICATOR))
            blocks.append(NeuronBlock(l, j, vid, z_var, mode, lb, ub, tuple(row_ids)))

    if with_outputs:
        out_layer = net.layers[-1]
        layer_idx = len(net.hidden_layers)
        for j in range(out_layer.width):
            w = out_layer.weights[j]
            wcoefs = tuple((prev_vid(layer_idx, i), -float(w[i]))
                           for i in range(out_layer.fan_in) if w[i] != 0.0)
            constraints.append(LinearConstraint(
                tuple(sorted(wcoefs + ((output_vids[j], 1.0),))),
                EQ, float(out_layer.biases[j]), OUTPUT_AFFINE))

    constraints.extend(extra_rows)
    stats = SimplificationStats(
        neurons_total=net.num_hidden_neurons + net.class_count,
        bounds_tightened_count=0,
        binary_total=net.num_hidden_neurons,
        binary_removed_count=removed_at_encode,
    )
    return MilpProblem(net, tuple(variables), tuple(constraints), tuple(blocks),
                       input_vids, output_vids, stats)


def encode_network(net: Network, bounds: BoundsMap) -> MilpProblem:
    """Encode the whole network using ``bounds`` for big-M constants.

    Neurons already stable under these bounds are emitted simplified and
    counted in the encode-time statistics.
    """
    return _encode(net, bounds)


def encode_prefix(net: Network, bounds: BoundsMap, upto_layer: int) -> MilpProblem:
    """Encode only hidden layers 0..upto_layer-1, with no output rows.

    Bounds entries for layers at or past ``upto_layer`` are never read, so a
    partially filled map is fine.  The result is the search space for
    optimizing layer ``upto_layer``'s pre-activations (an affine objective
    over the previous layer's post variables, or the inputs when
    ``upto_layer`` is 0).
    """
    return _encode(net, bounds, hidden_scope=upto_layer, with_outputs=False)


def attach_rival_query(problem: MilpProblem, target: int, rival: int) -> MilpProblem:
    """Append ``o_rival - o_target >= 0``: feasibility then witnesses an input
    where the rival scores at least the target (ties count)."""
    k = len(problem.output_vids)
    if not (0 <= target < k and 0 <= rival < k):
        raise ValueError(f"class index out of range for {k} outputs")
    if target == rival:
        raise ValueError("target and rival must differ")
    row = LinearConstraint(
        tuple(sorted(((problem.output_vids[rival], 1.0),
                      (problem.output_vids[target], -1.0)))),
        GE, 0.0, QUERY)
    return replace(problem, constraints=problem.constraints + (row,))


def fix_attributes(problem: MilpProblem, assign: AttributeAssignment) -> MilpProblem:
    """Pin fixed attributes to [v, v]; free attributes keep their bounds."""
    if assign.size != len(problem.input_vids):
        raise ValueError(
            f"assignment covers {assign.size} attributes, problem has "
            f"{len(problem.input_vids)} inputs")
    variables = list(problem.variables)
    for i, v in enumerate(assign.values):
        if v is None:
            continue
        var = variables[problem.input_vids[i]]
        if not (var.lb <= v <= var.ub):
            raise ValueError(
                f"attribute {i}: value {v} outside bounds [{var.lb}, {var.ub}]")
        variables[var.vid] = replace(var, lb=float(v), ub=float(v))
    return replace(problem, variables=tuple(variables))


def merge_bounds(tight: BoundsMap, boxed: BoundsMap) -> tuple[BoundsMap, int]:
    """Intersect tight (domain-wide) with boxed (assignment-specific) bounds.

    Per neuron the merge keeps the larger lower and the smaller upper bound.
    An inverted result (possible only through float noise, or disjoint inputs)
    reverts to the tight bound for that neuron.  Returns the merged map and
    the number of neurons whose interval got strictly narrower.
    """
    tightened = 0

    def merge_pair(t_lo, t_hi, b_lo, b_hi):
        nonlocal tightened
        m_lo = np.maximum(t_lo, b_lo)
        m_hi = np.minimum(t_hi, b_hi)
        bad = m_lo > m_hi
        if bad.any():
            if (m_lo - m_hi > 1e-9).any():
                logger.warning(
                    "merged bounds disjoint beyond noise for %d neuron(s); "
                    "reverting to tight bounds", int((m_lo - m_hi > 1e-9).sum()))
            m_lo = np.where(bad, t_lo, m_lo)
            m_hi = np.where(bad, t_hi, m_hi)
        narrower = (~bad) & ((m_lo > t_lo) | (m_hi < t_hi))
        tightened += int(narrower.sum())
        return m_lo, m_hi, narrower

    pre_lo, pre_hi, post_lo, post_hi = [], [], [], []
    for l in range(tight.num_hidden_layers):
        m_lo, m_hi, narrow = merge_pair(tight.pre_lo[l], tight.pre_hi[l],
                                        boxed.pre_lo[l], boxed.pre_hi[l])
        pre_lo.append(m_lo)
        pre_hi.append(m_hi)
        post_lo.append(np.maximum(m_lo, 0.0))
        post_hi.append(np.maximum(m_hi, 0.0))
    out_lo, out_hi, _ = merge_pair(tight.out_lo, tight.out_hi,
                                   boxed.out_lo, boxed.out_hi)
    merged = BoundsMap(boxed.input_lo.copy(), boxed.input_hi.copy(),
                       tuple(pre_lo), tuple(pre_hi),
                       tuple(post_lo), tuple(post_hi), out_lo, out_hi)
    return merged, tightened


def tighten_and_simplify(problem: MilpProblem, tight: BoundsMap,
                         boxed: BoundsMap) -> tuple[MilpProblem, SimplificationStats]:
    """Rewrite the encoding with merged bounds and collapse stable neurons.

    Big-M constants take the merged values; a hidden neuron with merged
    lb > 0 becomes the affine equality, merged ub <= 0 becomes post = 0, and
    either way its binary disappears.  The input problem is left untouched;
    its current input bounds and any query rows carry over.  Stats count
    strictly narrowed neurons and binaries absent from the result.
    """
    net = problem.net
    if not (tight.shapes_match(net) and boxed.shapes_match(net)):
        raise ValueError("bounds maps do not match the problem's network")
    merged, tightened = merge_bounds(tight, boxed)
    in_lo = np.array([problem.variables[v].lb for v in problem.input_vids])
    in_hi = np.array([problem.variables[v].ub for v in problem.input_vids])
    extra = tuple(c for c in problem.constraints if c.origin == QUERY)
    rebuilt = _encode(net, merged, input_bounds=(in_lo, in_hi), extra_rows=extra)
    stats = SimplificationStats(
        neurons_total=rebuilt.encode_stats.neurons_total,
        bounds_tightened_count=tightened,
        binary_total=rebuilt.encode_stats.binary_total,
        binary_removed_count=rebuilt.encode_stats.binary_removed_count,
    )
    return replace(rebuilt, encode_stats=problem.encode_stats), stats


def problem_to_lp_text(problem: MilpProblem) -> str:
    """Objective-free LP-format dump for cross-checking with external tools."""

    def term(vid: int, coef: float) -> str:
        name = problem.variables[vid].name
        sign = "+" if coef >= 0 else "-"
        return f"{sign} {abs(coef):.17g} {name}"

    lines = ["Minimize", " obj: 0", "Subject To"]
    rel_text = {LE: "<=", GE: ">=", EQ: "="}
    for idx, con in enumerate(problem.constraints):
        terms = " ".join(term(vid, coef) for vid, coef in con.coeffs)
        lines.append(f" c{idx}: {terms} {rel_text[con.relation]} {con.rhs:.17g}")
    lines.append("Bounds")
    for var in problem.variables:
        lo = f"{var.lb:.17g}" if var.lb != -INF else "-inf"
        hi = f"{var.ub:.17g}" if var.ub != INF else "+inf"
        lines.append(f" {lo} <= {var.name} <= {hi}")
    binaries = [problem.variables[v].name for v in problem.binary_vids]
    if binaries:
        lines.append("Binaries")
        lines.append(" " + " ".join(binaries))
    lines.append("End")
    return "\n".join(lines) + "\n"

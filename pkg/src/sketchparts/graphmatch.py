"""Attribute graphs over part instances and random-walk graph matching.

A label map becomes one global node (part-type histogram, foreground
fraction) plus a local node per connected part instance, each carrying its
part id, area, angular extent seen from the image centre, and normalized
centroid. Boundary-adjacent instances get polar relative-position edges;
every local node also anchors to the global node through its absolute
polar position. Matching two graphs is a quadratic assignment relaxed as a
reweighted random walk on the candidate-correspondence affinity matrix,
with Sinkhorn-bistochastic reweighting, under two hard constraints:
global matches only global, and locals match only within the same part id.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation
from .imaging import label_components

GLOBAL = -1  # node index of the global node in correspondence pairs

MIN_AREA_FRACTION = 1e-3  # instances below 0.1% of the foreground are noise


@dataclass(frozen=True)
class LocalNode:
    part_id: int
    area: int
    area_fraction: float  # of the non-background area
    subtended: float  # angular extent from the image centre, radians
    centroid: tuple  # (row, col) normalized to [0, 1)


@dataclass(frozen=True)
class AttributeGraph:
    histogram: dict  # part id -> instance count
    area_fraction: float  # foreground pixels / all pixels
    nodes: tuple
    edges: dict  # (i, j) -> (r, theta), stored in both directions
    anchors: dict  # i -> (r, theta) relative to the image centre


def _angular_extent(rows, cols, cy, cx):
    angles = np.sort(np.arctan2(rows - cy, cols - cx))
    if angles.size <= 1:
        return 0.0
    gaps = np.diff(angles)
    wrap = 2 * math.pi - (angles[-1] - angles[0])
    return float(2 * math.pi - max(gaps.max(), wrap))


def build_graph(lm):
    h, w = lm.labels.shape
    comps, comp_map = label_components(lm)
    foreground = int((lm.labels != 0).sum())
    if foreground == 0:
        return AttributeGraph({}, 0.0, (), {}, {})

    keep = [c for c in comps if c.area >= MIN_AREA_FRACTION * foreground]
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    nodes = []
    for c in keep:
        nodes.append(
            LocalNode(
                part_id=c.part_id,
                area=c.area,
                area_fraction=c.area / foreground,
                subtended=_angular_extent(c.pixels[:, 0], c.pixels[:, 1], cy, cx),
                centroid=(c.centroid[0] / h, c.centroid[1] / w),
            )
        )

    histogram = {}
    for n in nodes:
        histogram[n.part_id] = histogram.get(n.part_id, 0) + 1

    # adjacency: any 4-neighbouring pixel pair from two kept components
    kept_at = np.full(len(comps), -1, dtype=int)
    next_slot = 0
    for original_idx, c in enumerate(comps):
        if c.area >= MIN_AREA_FRACTION * foreground:
            kept_at[original_idx] = next_slot
            next_slot += 1
    edges = {}
    lab = comp_map
    for a, b in ((lab[:, :-1], lab[:, 1:]), (lab[:-1, :], lab[1:, :])):
        touching = (a >= 0) & (b >= 0) & (a != b)
        for ia, ib in zip(a[touching].ravel(), b[touching].ravel()):
            ka, kb = kept_at[ia], kept_at[ib]
            if ka < 0 or kb < 0 or ka == kb:
                continue
            if (ka, kb) in edges:
                continue
            dy = nodes[kb].centroid[0] - nodes[ka].centroid[0]
            dx = nodes[kb].centroid[1] - nodes[ka].centroid[1]
            r = math.hypot(dy, dx)
            theta = math.atan2(dy, dx)
            edges[(ka, kb)] = (r, theta)
            edges[(kb, ka)] = (r, _wrap_angle(theta + math.pi))

    anchors = {}
    for i, n in enumerate(nodes):
        dy = n.centroid[0] - 0.5
        dx = n.centroid[1] - 0.5
        anchors[i] = (math.hypot(dy, dx), math.atan2(dy, dx))

    return AttributeGraph(histogram, foreground / (h * w), tuple(nodes), edges, anchors)


def _wrap_angle(t):
    return math.atan2(math.sin(t), math.cos(t))


def _angle_dist(a, b):
    return abs(_wrap_angle(a - b))


@dataclass(frozen=True)
class MatchSigmas:
    subtended: float = 0.5
    centroid: float = 0.25
    radius: float = 0.25
    theta: float = 0.5


@dataclass
class Affinity:
    candidates: list  # (query node index, candidate node index); GLOBAL pairs first
    matrix: np.ndarray
    query: AttributeGraph
    cand: AttributeGraph


def _hist_similarity(ha, hb):
    keys = set(ha) | set(hb)
    if not keys:
        return 1.0
    lo = sum(min(ha.get(k, 0), hb.get(k, 0)) for k in keys)
    hi = sum(max(ha.get(k, 0), hb.get(k, 0)) for k in keys)
    return lo / hi if hi else 1.0


def build_affinity(q, c, sigmas=MatchSigmas()):
    """Constrained candidate list plus its affinity matrix.

    Unary terms sit on the diagonal: closeness in angular extent and
    centroid, weighted by the geometric mean of the two instance areas
    (fractions, so everything stays in [0, 1]). Off-diagonal terms compare
    the polar edge attributes of correspondence pairs whose edge exists in
    both graphs; local-global anchor edges take part with the same formula.
    """
    candidates = [(GLOBAL, GLOBAL)]
    for i, nq in enumerate(q.nodes):
        for a, nc in enumerate(c.nodes):
            if nq.part_id == nc.part_id:
                candidates.append((i, a))
    m = len(candidates)
    A = np.zeros((m, m))

    for idx, (i, a) in enumerate(candidates):
        if i == GLOBAL:
            A[idx, idx] = _hist_similarity(q.histogram, c.histogram) * math.sqrt(
                q.area_fraction * c.area_fraction
            )
        else:
            nq, nc = q.nodes[i], c.nodes[a]
            d_ext = abs(nq.subtended - nc.subtended)
            d_cen = math.hypot(
                nq.centroid[0] - nc.centroid[0], nq.centroid[1] - nc.centroid[1]
            )
            A[idx, idx] = math.exp(
                -d_ext / sigmas.subtended - d_cen / sigmas.centroid
            ) * math.sqrt(nq.area_fraction * nc.area_fraction)

    def edge_between(graph, i, j):
        if i == GLOBAL:
            return graph.anchors.get(j)
        if j == GLOBAL:
            return graph.anchors.get(i)
        return graph.edges.get((i, j))

    for m1, (i, a) in enumerate(candidates):
        for m2 in range(m1 + 1, m):
            j, b = candidates[m2]
            if i == j or a == b:
                continue  # one-to-one conflicts never reinforce each other
            eq = edge_between(q, i, j)
            ec = edge_between(c, a, b)
            if eq is None or ec is None:
                continue
            val = math.exp(
                -abs(eq[0] - ec[0]) / sigmas.radius - _angle_dist(eq[1], ec[1]) / sigmas.theta
            )
            A[m1, m2] = A[m2, m1] = val
    return Affinity(candidates, A, q, c)


@dataclass
class MatchResult:
    pairs: dict  # query node index (GLOBAL for the global node) -> candidate index
    score: float
    converged: bool
    relaxed: np.ndarray  # final walk distribution over candidates


def _sinkhorn(x, rows, cols, iterations):
    q = x.copy()
    for _ in range(iterations):
        row_sum = np.bincount(rows, weights=q, minlength=rows.max() + 1)
        q = q / row_sum[rows]
        col_sum = np.bincount(cols, weights=q, minlength=cols.max() + 1)
        q = q / col_sum[cols]
    return q


def rrwm_match(affinity, alpha=0.2, beta=30.0, sinkhorn_iterations=10, max_iterations=300, tol=1e-8):
    """Reweighted random walk over the affinity matrix, then greedy one-to-one
    discretization. Never emits a pair outside the candidate list, so the
    matching constraints hold by construction."""
    candidates = affinity.candidates
    if not candidates:
        raise ContractViolation("empty candidate list")
    A = affinity.matrix
    m = len(candidates)
    # bistochastic normalization groups: one row per query node, one column
    # per candidate node (the global pair gets its own row and column)
    qs = sorted({i for i, _ in candidates})
    cs = sorted({a for _, a in candidates})
    rows = np.array([qs.index(i) for i, _ in candidates])
    cols = np.array([cs.index(a) for _, a in candidates])

    x = np.full(m, 1.0 / m)
    converged = False
    for _ in range(max_iterations):
        walked = A @ x
        sharp = np.exp(beta * x / x.max())
        jump = _sinkhorn(sharp, rows, cols, sinkhorn_iterations)
        y = alpha * walked + (1.0 - alpha) * jump
        total = y.sum()
        if total <= 0:
            break
        y = y / total
        if np.abs(y - x).max() < tol:
            x = y
            converged = True
            break
        x = y

    order = np.argsort(-x, kind="stable")
    used_q, used_c = set(), set()
    chosen = []
    for idx in order:
        i, a = candidates[idx]
        if i in used_q or a in used_c:
            continue
        used_q.add(i)
        used_c.add(a)
        chosen.append(idx)
    indicator = np.zeros(m)
    indicator[chosen] = 1.0
    score = float(indicator @ A @ indicator)
    pairs = {candidates[idx][0]: candidates[idx][1] for idx in chosen}
    return MatchResult(pairs, score, converged, x)


def match_maps(query_lm, cand_lm, sigmas=MatchSigmas(), **kwargs):
    affinity = build_affinity(build_graph(query_lm), build_graph(cand_lm), sigmas)
    return rrwm_match(affinity, **kwargs)


def rerank(query_lm, candidates, top_t=50, sigmas=MatchSigmas()):
    """Re-order the first top_t of an initial ranking by graph similarity.

    candidates is an ordered list of (id, LabelMap), best first. Scored
    entries sort by descending match score, stable against the initial
    order; everything beyond top_t keeps its position.
    """
    if top_t < 0:
        raise ContractViolation(f"top_t must be >= 0, got {top_t}")
    head = candidates[: min(top_t, len(candidates))]
    tail = candidates[len(head) :]
    qg = build_graph(query_lm)
    scored = []
    for rank, (cid, lm) in enumerate(head):
        result = rrwm_match(build_affinity(qg, build_graph(lm), sigmas))
        scored.append((-result.score, rank, cid))
    scored.sort()
    return [cid for _, _, cid in scored] + [cid for cid, _ in tail]

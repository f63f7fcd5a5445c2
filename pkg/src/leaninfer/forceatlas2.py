"""Force-directed 2-d layout used directly as a user representation.

Linear attraction along edges (weight * distance), degree-weighted repulsion
between all node pairs, constant gravity toward the origin, and the adaptive
global-speed heuristic based on per-node swinging. Above ``bh_threshold``
nodes, repulsion switches to a Barnes-Hut quadtree approximation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit, prange

from ._rng import derive_seed
from .embedding import EmbeddingMatrix
from .graph import InteractionGraph

_MAX_DEPTH = 48
_EPS = 1e-9


@dataclass(frozen=True)
class FA2Params:
    scaling: float = 2.0  # repulsion constant k_r
    gravity: float = 1.0
    edge_weight_influence: float = 1.0
    jitter_tolerance: float = 1.0
    theta: float = 1.2
    bh_threshold: int = 1000  # exact pairwise repulsion below this node count
    seed: int = 0

    def as_dict(self) -> dict:
        return {
            "scaling": self.scaling,
            "gravity": self.gravity,
            "edge_weight_influence": self.edge_weight_influence,
            "jitter_tolerance": self.jitter_tolerance,
            "theta": self.theta,
            "bh_threshold": self.bh_threshold,
            "seed": self.seed,
        }


@dataclass
class LayoutState:
    positions: np.ndarray
    displacements: np.ndarray
    iterations: int
    speed: float


@njit(cache=True, nogil=True, parallel=True, boundscheck=False)
def _repulsion_exact(pos, mass, kr, fx, fy):
    n = pos.shape[0]
    for i in prange(n):
        xi = pos[i, 0]
        yi = pos[i, 1]
        ax = 0.0
        ay = 0.0
        for j in range(n):
            if j == i:
                continue
            dx = xi - pos[j, 0]
            dy = yi - pos[j, 1]
            d2 = dx * dx + dy * dy
            if d2 < _EPS * _EPS:
                dx = _EPS * (1.0 + i - j)
                dy = 0.0
                d2 = dx * dx
            f = kr * mass[i] * mass[j] / d2
            ax += dx * f
            ay += dy * f
        fx[i] += ax
        fy[i] += ay


@njit(cache=True, nogil=True, boundscheck=False)
def _bh_build(pos, mass, child, point, cmass, comx, comy, cx, cy, half):
    """Insert all points into the quadtree arrays; returns cell count or -1 on overflow."""
    n = pos.shape[0]
    cap = child.shape[0]
    minx = pos[0, 0]
    maxx = pos[0, 0]
    miny = pos[0, 1]
    maxy = pos[0, 1]
    for i in range(1, n):
        if pos[i, 0] < minx:
            minx = pos[i, 0]
        if pos[i, 0] > maxx:
            maxx = pos[i, 0]
        if pos[i, 1] < miny:
            miny = pos[i, 1]
        if pos[i, 1] > maxy:
            maxy = pos[i, 1]
    side = max(maxx - minx, maxy - miny) * 0.5 + _EPS
    child[0] = -1
    point[0] = -1
    cmass[0] = 0.0
    comx[0] = 0.0
    comy[0] = 0.0
    cx[0] = (minx + maxx) * 0.5
    cy[0] = (miny + maxy) * 0.5
    half[0] = side
    ncells = 1
    for i in range(n):
        x = pos[i, 0]
        y = pos[i, 1]
        m = mass[i]
        cur = 0
        depth = 0
        while True:
            cmass[cur] += m
            comx[cur] += m * x
            comy[cur] += m * y
            if child[cur] >= 0:
                q = 0
                if x >= cx[cur]:
                    q += 1
                if y >= cy[cur]:
                    q += 2
                cur = child[cur] + q
                depth += 1
                continue
            if point[cur] == -1:
                point[cur] = i
                break
            if depth >= _MAX_DEPTH:
                point[cur] = -2  # merged bucket of (near-)coincident points
                break
            j = point[cur]
            if ncells + 4 > cap:
                return -1
            base = ncells
            ncells += 4
            h = half[cur] * 0.5
            for q in range(4):
                c = base + q
                child[c] = -1
                point[c] = -1
                cmass[c] = 0.0
                comx[c] = 0.0
                comy[c] = 0.0
                cx[c] = cx[cur] + (h if q & 1 else -h)
                cy[c] = cy[cur] + (h if q & 2 else -h)
                half[c] = h
            child[cur] = base
            point[cur] = -1
            qj = 0
            if pos[j, 0] >= cx[cur]:
                qj += 1
            if pos[j, 1] >= cy[cur]:
                qj += 2
            cj = base + qj
            point[cj] = j
            cmass[cj] += mass[j]
            comx[cj] += mass[j] * pos[j, 0]
            comy[cj] += mass[j] * pos[j, 1]
            q = 0
            if x >= cx[cur]:
                q += 1
            if y >= cy[cur]:
                q += 2
            cur = child[cur] + q
            depth += 1
    return ncells


@njit(cache=True, nogil=True, boundscheck=False)
def _bh_radii(pos, child, point, cmass, comx, comy, cx, cy, radius):
    """Per-cell content size: max distance from the cell's center of mass to
    any contained point (the opening criterion compares against 2x this)."""
    n = pos.shape[0]
    radius[:] = 0.0
    for i in range(n):
        x = pos[i, 0]
        y = pos[i, 1]
        cur = 0
        while True:
            mc = cmass[cur]
            dx = x - comx[cur] / mc
            dy = y - comy[cur] / mc
            d = np.sqrt(dx * dx + dy * dy)
            if d > radius[cur]:
                radius[cur] = d
            if child[cur] < 0:
                break
            q = 0
            if x >= cx[cur]:
                q += 1
            if y >= cy[cur]:
                q += 2
            cur = child[cur] + q


@njit(cache=True, nogil=True, parallel=True, boundscheck=False)
def _repulsion_bh(pos, mass, kr, theta, child, point, cmass, comx, comy, half, radius, fx, fy):
    n = pos.shape[0]
    for i in prange(n):
        stack = np.empty(4 * _MAX_DEPTH + 8, dtype=np.int64)
        xi = pos[i, 0]
        yi = pos[i, 1]
        mi = mass[i]
        ax = 0.0
        ay = 0.0
        sp = 0
        stack[sp] = 0
        sp += 1
        while sp > 0:
            sp -= 1
            c = stack[sp]
            mc = cmass[c]
            if mc <= 0.0:
                continue
            if child[c] == -1 and point[c] == i:
                continue
            dx = xi - comx[c] / mc
            dy = yi - comy[c] / mc
            d2 = dx * dx + dy * dy
            if child[c] == -1:
                # single point or merged bucket: exact interaction with the aggregate
                if d2 < _EPS * _EPS:
                    dx = _EPS * (1.0 + i)
                    dy = 0.0
                    d2 = dx * dx
                f = kr * mi * mc / d2
                ax += dx * f
                ay += dy * f
            else:
                d = np.sqrt(d2)
                size = 2.0 * radius[c]
                if 2.0 * half[c] > size:
                    size = 2.0 * half[c]
                if d * theta > size:
                    if d2 < _EPS * _EPS:
                        dx = _EPS * (1.0 + i)
                        dy = 0.0
                        d2 = dx * dx
                    f = kr * mi * mc / d2
                    ax += dx * f
                    ay += dy * f
                else:
                    for q in range(4):
                        stack[sp] = child[c] + q
                        sp += 1
        fx[i] += ax
        fy[i] += ay


@njit(cache=True, nogil=True, boundscheck=False)
def _attraction(pos, indptr, indices, weights, ewi, fx, fy):
    n = indptr.shape[0] - 1
    for u in range(n):
        ax = 0.0
        ay = 0.0
        for k in range(indptr[u], indptr[u + 1]):
            v = indices[k]
            w = weights[k] if ewi == 1.0 else weights[k] ** ewi
            ax += (pos[v, 0] - pos[u, 0]) * w
            ay += (pos[v, 1] - pos[u, 1]) * w
        fx[u] += ax
        fy[u] += ay


@njit(cache=True, nogil=True, boundscheck=False)
def _gravity(pos, mass, kg, fx, fy):
    n = pos.shape[0]
    for i in range(n):
        d = np.sqrt(pos[i, 0] ** 2 + pos[i, 1] ** 2)
        if d > _EPS:
            f = kg * mass[i] / d
            fx[i] -= pos[i, 0] * f
            fy[i] -= pos[i, 1] * f


@njit(cache=True, nogil=True, boundscheck=False)
def _apply_forces(pos, mass, fx, fy, ofx, ofy, jitter_tolerance, speed, speed_efficiency):
    n = pos.shape[0]
    total_swing = 0.0
    total_traction = 0.0
    for i in range(n):
        sdx = ofx[i] - fx[i]
        sdy = ofy[i] - fy[i]
        swing = np.sqrt(sdx * sdx + sdy * sdy)
        tdx = ofx[i] + fx[i]
        tdy = ofy[i] + fy[i]
        total_swing += mass[i] * swing
        total_traction += 0.5 * mass[i] * np.sqrt(tdx * tdx + tdy * tdy)

    est_jt = 0.05 * np.sqrt(n)
    min_jt = np.sqrt(est_jt)
    max_jt = 10.0
    jt = jitter_tolerance * max(min_jt, min(max_jt, est_jt * total_traction / (n * n)))
    min_eff = 0.05
    if total_traction > 0 and total_swing / total_traction > 2.0:
        if speed_efficiency > min_eff:
            speed_efficiency *= 0.5
        jt = max(jt, jitter_tolerance)
    if total_swing == 0.0:
        target_speed = np.inf
    else:
        target_speed = jt * speed_efficiency * total_traction / total_swing
    if total_swing > jt * total_traction:
        if speed_efficiency > min_eff:
            speed_efficiency *= 0.7
    elif speed < 1000.0:
        speed_efficiency *= 1.3
    max_rise = 0.5
    speed = speed + min(target_speed - speed, max_rise * speed)

    for i in range(n):
        sdx = ofx[i] - fx[i]
        sdy = ofy[i] - fy[i]
        swing = mass[i] * np.sqrt(sdx * sdx + sdy * sdy)
        factor = speed / (1.0 + np.sqrt(speed * swing))
        pos[i, 0] += fx[i] * factor
        pos[i, 1] += fy[i] * factor
    return speed, speed_efficiency


def _initial_positions(n: int, seed: int) -> np.ndarray:
    rng = np.random.Generator(np.random.PCG64(derive_seed(seed, 0xFA2)))
    r = np.sqrt(rng.random(n))
    ang = 2.0 * np.pi * rng.random(n)
    return np.column_stack([r * np.cos(ang), r * np.sin(ang)])


def fa2_layout(
    graph: InteractionGraph,
    iterations: int = 1000,
    params: FA2Params | None = None,
    return_state: bool = False,
):
    """Run the layout on the symmetrized graph; returns N x 2 positions.

    Deterministic for a fixed seed: initial positions are drawn in the unit
    disc and per-node force accumulators combine in index order.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    params = params or FA2Params()
    adj = graph.symmetrized()
    n = graph.n
    if n == 0:
        raise ValueError("graph is empty")
    mass = (adj.degrees() + 1).astype(np.float64)
    pos = _initial_positions(n, params.seed)
    fx = np.zeros(n)
    fy = np.zeros(n)
    ofx = np.zeros(n)
    ofy = np.zeros(n)
    use_bh = n > params.bh_threshold
    if use_bh:
        cap = 16 * n + 64
        child = np.empty(cap, dtype=np.int64)
        point = np.empty(cap, dtype=np.int64)
        cmass = np.empty(cap)
        comx = np.empty(cap)
        comy = np.empty(cap)
        ccx = np.empty(cap)
        ccy = np.empty(cap)
        half = np.empty(cap)
        radius = np.empty(cap)
    speed = 1.0
    speed_efficiency = 1.0
    for _ in range(iterations):
        ofx, fx = fx, ofx
        ofy, fy = fy, ofy
        fx[:] = 0.0
        fy[:] = 0.0
        if use_bh:
            while _bh_build(pos, mass, child, point, cmass, comx, comy, ccx, ccy, half) < 0:
                cap = 2 * child.shape[0]
                child = np.empty(cap, dtype=np.int64)
                point = np.empty(cap, dtype=np.int64)
                cmass = np.empty(cap)
                comx = np.empty(cap)
                comy = np.empty(cap)
                ccx = np.empty(cap)
                ccy = np.empty(cap)
                half = np.empty(cap)
                radius = np.empty(cap)
            _bh_radii(pos, child, point, cmass, comx, comy, ccx, ccy, radius)
            _repulsion_bh(pos, mass, params.scaling, params.theta, child, point,
                          cmass, comx, comy, half, radius, fx, fy)
        else:
            _repulsion_exact(pos, mass, params.scaling, fx, fy)
        if params.gravity != 0.0:
            _gravity(pos, mass, params.gravity, fx, fy)
        _attraction(pos, adj.indptr, adj.indices, adj.weights,
                    params.edge_weight_influence, fx, fy)
        speed, speed_efficiency = _apply_forces(
            pos, mass, fx, fy, ofx, ofy, params.jitter_tolerance, speed, speed_efficiency
        )
    if return_state:
        return LayoutState(pos, np.column_stack([fx, fy]), iterations, speed)
    return pos


def fa2_embedding(graph: InteractionGraph, iterations: int = 1000,
                  params: FA2Params | None = None) -> EmbeddingMatrix:
    """Layout wrapped as a 2-d embedding over the graph's users."""
    params = params or FA2Params()
    pos = fa2_layout(graph, iterations, params)
    meta = {"method": "fa2", "iterations": iterations, **params.as_dict()}
    return EmbeddingMatrix(graph.ids, pos, meta)


def repulsion_forces(pos: np.ndarray, mass: np.ndarray, kr: float,
                     theta: float | None = None) -> np.ndarray:
    """Standalone repulsion evaluation (exact if theta is None, else Barnes-Hut).

    Exposed for accuracy checks of the quadtree approximation.
    """
    n = pos.shape[0]
    fx = np.zeros(n)
    fy = np.zeros(n)
    if theta is None:
        _repulsion_exact(pos, mass, kr, fx, fy)
    else:
        cap = 16 * n + 64
        child = np.empty(cap, dtype=np.int64)
        point = np.empty(cap, dtype=np.int64)
        cmass = np.empty(cap)
        comx = np.empty(cap)
        comy = np.empty(cap)
        ccx = np.empty(cap)
        ccy = np.empty(cap)
        half = np.empty(cap)
        radius = np.empty(cap)
        assert _bh_build(pos, mass, child, point, cmass, comx, comy, ccx, ccy, half) > 0
        _bh_radii(pos, child, point, cmass, comx, comy, ccx, ccy, radius)
        _repulsion_bh(pos, mass, kr, theta, child, point, cmass, comx, comy, half, radius, fx, fy)
    return np.column_stack([fx, fy])

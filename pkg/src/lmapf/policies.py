"""Guidance policy architectures.

All policies are flat parameter vectors plus a forward rule; optimization
treats them as black boxes. Architectures:

* ``cnn``: small convolutional net mapping whole-map traffic observations to
  one weight per directed edge. Used by the periodic-update pipelines.
* ``windowed_quadratic``: linear + contra-flow-quadratic functional over a
  square usage window around one cell, producing its four outgoing edge
  costs. Evaluated lazily inside guide-path search.
* ``contra_outflow``: parameter-free closed form penalizing opposing flow
  and outflow congestion.
* ``reduced_quadratic``: 48-coefficient neighbor-indexed quadratic able to
  reproduce ``contra_outflow`` exactly for one known parameter setting.
* ``static_weights``: one free parameter per valid guidance edge, squashed
  through softplus; map-specific, time-invariant.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .grid import GridMap
from .guidance import GuidanceGraph

EPS_WEIGHT = 1e-3  # positivity floor applied when installing periodic weights


@dataclass
class GuidancePolicy:
    arch: str
    theta: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64).reshape(-1)

    @property
    def param_count(self) -> int:
        return int(self.theta.size)

    def with_theta(self, theta: np.ndarray) -> "GuidancePolicy":
        theta = np.asarray(theta, dtype=np.float64).reshape(-1)
        if theta.size != self.theta.size:
            raise ValueError(f"theta size {theta.size} != expected {self.theta.size}")
        return GuidancePolicy(self.arch, theta, dict(self.meta))

    def save(self, path: str | Path) -> None:
        payload = {"arch": self.arch, "meta": self.meta, "theta": self.theta.tolist()}
        Path(path).write_text(json.dumps(payload))

    @staticmethod
    def load(path: str | Path) -> "GuidancePolicy":
        payload = json.loads(Path(path).read_text())
        pol = GuidancePolicy(payload["arch"], np.array(payload["theta"], dtype=np.float64),
                             payload.get("meta", {}))
        expected = _expected_size(pol.arch, pol.meta)
        if expected is not None and pol.param_count != expected:
            raise ValueError(
                f"{pol.arch} policy expects {expected} parameters, file has {pol.param_count}")
        return pol


def _expected_size(arch: str, meta: dict) -> int | None:
    if arch == "cnn":
        return cnn_param_count(
            in_channels=meta.get("in_channels", 6),
            hidden=tuple(meta.get("hidden", (40, 16))),
            out_channels=meta.get("out_channels", 5),
        )
    if arch == "windowed_quadratic":
        return wq_param_count(meta.get("window", 5))
    if arch == "contra_outflow":
        return 0
    if arch == "reduced_quadratic":
        return 48
    return None  # static_weights: checked against the map at use time


# -- convolutional policy ------------------------------------------------------


def cnn_param_count(in_channels: int = 6, hidden: tuple[int, int] = (40, 16),
                    out_channels: int = 5) -> int:
    c1, c2 = hidden
    total = c1 * in_channels * 9 + c1  # 3x3 conv
    total += 2 * c1                    # channel affine (batch-norm style)
    total += c2 * c1 + c2              # 1x1 conv
    total += 2 * c2
    total += out_channels * c2 + out_channels  # 1x1 conv, linear output
    return total


def cnn_policy(in_channels: int = 6, hidden: tuple[int, int] = (40, 16),
               out_channels: int = 5) -> GuidancePolicy:
    meta = {"in_channels": in_channels, "hidden": list(hidden), "out_channels": out_channels}
    return GuidancePolicy("cnn", np.zeros(cnn_param_count(in_channels, hidden, out_channels)), meta)


def _conv3x3(w: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Same-padded 3x3 convolution. w: (co, ci, 3, 3); x: (ci, H, W)."""
    ci, h, wdt = x.shape
    padded = np.zeros((ci, h + 2, wdt + 2), dtype=np.float64)
    padded[:, 1:-1, 1:-1] = x
    windows = np.lib.stride_tricks.sliding_window_view(padded, (3, 3), axis=(1, 2))
    patches = windows.transpose(1, 2, 0, 3, 4).reshape(h * wdt, ci * 9)
    out = patches @ w.reshape(w.shape[0], ci * 9).T
    return out.T.reshape(w.shape[0], h, wdt)


def cnn_forward(policy: GuidancePolicy, obs: np.ndarray) -> np.ndarray:
    """Raw (out_channels, H, W) map from a normalized (in_channels, H, W) obs."""
    if policy.arch != "cnn":
        raise ValueError(f"expected cnn policy, got {policy.arch}")
    ci = policy.meta.get("in_channels", 6)
    c1, c2 = policy.meta.get("hidden", (40, 16))
    co = policy.meta.get("out_channels", 5)
    obs = np.asarray(obs, dtype=np.float64)
    if obs.ndim != 3 or obs.shape[0] != ci:
        raise ValueError(f"observation shape {obs.shape} incompatible with {ci} input channels")

    th = policy.theta
    o = 0

    def take(*shape):
        nonlocal o
        size = int(np.prod(shape))
        out = th[o:o + size].reshape(shape)
        o += size
        return out

    w1 = take(c1, ci, 3, 3)
    b1 = take(c1)
    g1 = take(c1)
    be1 = take(c1)
    w2 = take(c2, c1)
    b2 = take(c2)
    g2 = take(c2)
    be2 = take(c2)
    w3 = take(co, c2)
    b3 = take(co)

    h1 = _conv3x3(w1, obs) + b1[:, None, None]
    h1 = g1[:, None, None] * h1 + be1[:, None, None]
    np.maximum(h1, 0.0, out=h1)
    h2 = np.tensordot(w2, h1, axes=(1, 0)) + b2[:, None, None]
    h2 = g2[:, None, None] * h2 + be2[:, None, None]
    np.maximum(h2, 0.0, out=h2)
    return np.tensordot(w3, h2, axes=(1, 0)) + b3[:, None, None]


def normalize_channels(obs: np.ndarray) -> np.ndarray:
    """Min-max normalize each channel into [0, 1]; constant channels go to zero."""
    obs = np.asarray(obs, dtype=np.float64)
    out = np.zeros_like(obs)
    for ch in range(obs.shape[0]):
        lo = obs[ch].min()
        hi = obs[ch].max()
        if hi > lo:
            out[ch] = (obs[ch] - lo) / (hi - lo)
    return out


# -- windowed quadratic policy -------------------------------------------------


def wq_param_count(window: int = 5) -> int:
    return 4 * (4 * window * window + 2 * window * (window - 1))


def wq_policy(window: int = 5) -> GuidancePolicy:
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be odd and positive")
    return GuidancePolicy("windowed_quadratic", np.zeros(wq_param_count(window)),
                          {"window": window})


def wq_forward(policy: GuidancePolicy, obs: np.ndarray) -> np.ndarray:
    """Raw scores for the four outgoing edges; search applies max(., 0) + 1."""
    if policy.arch != "windowed_quadratic":
        raise ValueError(f"expected windowed_quadratic policy, got {policy.arch}")
    s = policy.meta.get("window", 5)
    obs = np.asarray(obs, dtype=np.float64)
    if obs.shape != (4, s, s):
        raise ValueError(f"observation shape {obs.shape} != (4, {s}, {s})")
    lin = obs.reshape(-1)
    contra_h = (obs[0, :, :-1] * obs[2, :, 1:]).reshape(-1)
    contra_v = (obs[3, :-1, :] * obs[1, 1:, :]).reshape(-1)
    feats = np.concatenate([lin, contra_h, contra_v])
    per_dir = feats.size
    return policy.theta.reshape(4, per_dir) @ feats


def window_observation(usage4: np.ndarray, center: tuple[int, int], window: int = 5) -> np.ndarray:
    """Zero-padded (4, window, window) slice of the usage field around center."""
    usage4 = np.asarray(usage4, dtype=np.float64)
    _, h, w = usage4.shape
    half = window // 2
    out = np.zeros((4, window, window), dtype=np.float64)
    r0, c0 = center
    rlo = max(0, r0 - half)
    rhi = min(h, r0 + half + 1)
    clo = max(0, c0 - half)
    chi = min(w, c0 + half + 1)
    out[:, rlo - (r0 - half):rhi - (r0 - half), clo - (c0 - half):chi - (c0 - half)] = \
        usage4[:, rlo:rhi, clo:chi]
    return out


def wq_theta_matching_contra_outflow(window: int = 5) -> np.ndarray:
    """Windowed-quadratic coefficients reproducing contra_outflow_weight.

    Per outgoing direction: a unit product term on the stepped edge's
    opposing pair, a unit linear term on the opposing usage at the landing
    cell, and 0.5 on each of the landing cell's four outgoing usages. Exact
    as long as non-edges carry zero usage, which any usage field built from
    real paths satisfies. Useful as a warm start for training.
    """
    from .grid import DELTAS, OPPOSITE
    if window < 3 or window % 2 == 0:
        raise ValueError("window must be odd and at least 3")
    per_dir = 4 * window * window + 2 * window * (window - 1)
    half = window // 2
    pair_h = 4 * window * window
    pair_v = pair_h + window * (window - 1)
    theta = np.zeros(4 * per_dir)

    def lin(ch: int, r: int, c: int) -> int:
        return ch * window * window + r * window + c

    for d in range(4):
        base = d * per_dir
        dr, dc = DELTAS[d]
        vr, vc = half + dr, half + dc
        theta[base + lin(int(OPPOSITE[d]), vr, vc)] += 1.0
        for ch in range(4):
            theta[base + lin(ch, vr, vc)] += 0.5
        if d == 0:
            theta[base + pair_h + half * (window - 1) + half] = 1.0
        elif d == 2:
            theta[base + pair_h + half * (window - 1) + half - 1] = 1.0
        elif d == 3:
            theta[base + pair_v + half * window + half] = 1.0
        else:
            theta[base + pair_v + (half - 1) * window + half] = 1.0
    return theta


# -- fixed contra-flow + outflow form ------------------------------------------


def contra_outflow_policy() -> GuidancePolicy:
    return GuidancePolicy("contra_outflow", np.zeros(0))


def contra_outflow_weight(usage4: np.ndarray, grid: GridMap,
                          u: tuple[int, int], v: tuple[int, int]) -> float:
    """Raw penalty for directed edge (u, v); search cost adds +1 on top.

    Penalty = opposing-flow product + opposing flow + half the total flow
    leaving v.
    """
    from .grid import DELTAS, MOVE_DIRECTIONS, OPPOSITE
    d = None
    for cand in MOVE_DIRECTIONS:
        dr, dc = DELTAS[cand]
        if (u[0] + dr, u[1] + dc) == v:
            d = cand
            break
    if d is None or not grid.is_traversable(u) or not grid.is_traversable(v):
        raise ValueError(f"({u}, {v}) is not a grid edge")
    uv = float(usage4[int(d), u[0], u[1]])
    vu = float(usage4[int(OPPOSITE[d]), v[0], v[1]])
    out_sum = 0.0
    for d2 in MOVE_DIRECTIONS:
        dr, dc = DELTAS[d2]
        if grid.is_traversable((v[0] + dr, v[1] + dc)):
            out_sum += float(usage4[int(d2), v[0], v[1]])
    return uv * vu + vu + 0.5 * out_sum


# -- reduced quadratic policy ----------------------------------------------------


def reduced_quadratic_policy() -> GuidancePolicy:
    return GuidancePolicy("reduced_quadratic", np.zeros(48))


def reduced_theta_matching_contra_outflow() -> np.ndarray:
    """Coefficients under which the reduced form reproduces contra_outflow.

    Layout is theta[(i*4 + j)*3 + kind] for incoming-edge direction i,
    neighbor slot j (indexed by the direction of the edge from the neighbor
    into the cell), kinds (product, inflow-linear, inflow-linear-duplicate).
    """
    theta = np.zeros(48)
    for i in range(4):
        theta[(i * 4 + i) * 3 + 0] = 1.0
        theta[(i * 4 + i) * 3 + 1] = 1.0
        for j in range(4):
            theta[(i * 4 + j) * 3 + 2] = 0.5
    return theta


def reduced_quadratic_weight(policy: GuidancePolicy, usage4: np.ndarray, grid: GridMap,
                             u: tuple[int, int], v: tuple[int, int]) -> float:
    """Raw score of directed edge (u, v); search cost is max(., 0) + 1.

    The two linear kinds are kept separate even though they multiply the
    same feature; the parameterization is redundant by construction.
    """
    from .grid import DELTAS, MOVE_DIRECTIONS, OPPOSITE
    if policy.arch != "reduced_quadratic":
        raise ValueError(f"expected reduced_quadratic policy, got {policy.arch}")
    d_in = None
    for cand in MOVE_DIRECTIONS:
        dr, dc = DELTAS[cand]
        if (u[0] + dr, u[1] + dc) == v:
            d_in = int(cand)
            break
    if d_in is None or not grid.is_traversable(u) or not grid.is_traversable(v):
        raise ValueError(f"({u}, {v}) is not a grid edge")
    theta = policy.theta
    om = 0.0
    for j in range(4):
        opp = int(OPPOSITE[j])
        dr, dc = DELTAS[opp]
        uj = (v[0] + dr, v[1] + dc)
        if not grid.is_traversable(uj):
            continue
        into_v = float(usage4[j, uj[0], uj[1]])
        out_of_v = float(usage4[opp, v[0], v[1]])
        base = (d_in * 4 + j) * 3
        om += theta[base] * into_v * out_of_v
        om += theta[base + 1] * out_of_v
        om += theta[base + 2] * out_of_v
    return om


# -- static per-edge weights -----------------------------------------------------


def map_digest(grid: GridMap) -> str:
    import hashlib
    return hashlib.sha256("\n".join(grid.body_lines).encode()).hexdigest()[:16]


def static_policy(grid: GridMap, with_wait: bool) -> GuidancePolicy:
    g = GuidanceGraph(grid, with_wait=with_wait)
    meta = {"with_wait": with_wait, "height": grid.height, "width": grid.width,
            "map_digest": map_digest(grid)}
    return GuidancePolicy("static_weights", np.zeros(g.edge_count), meta)


def static_forward(policy: GuidancePolicy, grid: GridMap) -> np.ndarray:
    """Dense weight tensor for the map; invalid edges hold +inf.

    Parameters map through softplus plus a small floor, so any real theta
    yields strictly positive weights and zero theta is uniform.
    """
    if policy.arch != "static_weights":
        raise ValueError(f"expected static_weights policy, got {policy.arch}")
    meta = policy.meta
    if meta.get("height") != grid.height or meta.get("width") != grid.width:
        raise ValueError("static policy was built for a different map size")
    digest = meta.get("map_digest")
    if digest is not None and digest != map_digest(grid):
        raise ValueError("static policy was built for a different map layout")
    g = GuidanceGraph(grid, with_wait=bool(meta.get("with_wait", True)))
    if policy.param_count != g.edge_count:
        raise ValueError(
            f"static policy has {policy.param_count} parameters, map has {g.edge_count} edges")
    vals = np.logaddexp(0.0, policy.theta) + EPS_WEIGHT
    out = np.full(g.mask.shape, np.inf, dtype=np.float64)
    out[g.mask] = vals
    return out

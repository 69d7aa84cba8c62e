"""Temporally consistent alignment filter.

Each hypothesis tree holds Kalman beliefs over the alignment ``[x, y, theta]``.
Every tick, each leaf branches once for "no measurement" and once per gated
candidate measurement. A node's cost is its parent's cost plus the step cost

    measurement:     0.5 * (r' S^-1 r + log|S|)
    no measurement:  -log(p_nm) - 0.5 * d_z * log(2 pi)

so the minimum-cost leaf is the most likely measurement sequence inside the
window. Trees are pruned to a sliding window of ``window`` ticks and to the
``max_branches`` cheapest leaves.

Without a trusted alignment the filter explores: every measurement seeds a
tree, and a tree that survives a full window with a cheap enough best leaf
becomes the main tree. The main tree is dropped again after
``max_no_meas_steps`` ticks without a measurement on its best leaf.
"""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .geometry import Gaussian3, wrap_angles
from .registration import AlignmentMeasurement

D_Z = 3
LOG_2PI = math.log(2.0 * math.pi)


class FilterError(ArithmeticError):
    pass


def _diag(*v: float) -> np.ndarray:
    return np.diag(np.array(v, dtype=float))


@dataclass(frozen=True)
class KalmanModel:
    """Random-walk alignment model observed directly (``H = I``)."""

    Q: np.ndarray = field(default_factory=lambda: _diag(1e-4, 1e-4, 1e-5))
    R: np.ndarray = field(default_factory=lambda: _diag(0.04, 0.04, math.radians(2.0) ** 2))

    def __post_init__(self) -> None:
        for name in ("Q", "R"):
            m = np.array(getattr(self, name), dtype=float).reshape(3, 3)
            if not np.allclose(m, m.T, atol=1e-12):
                raise ValueError(f"{name} must be symmetric")
            if name == "R" and np.linalg.eigvalsh(m).min() <= 0:
                raise ValueError("R must be positive definite")
            if np.linalg.eigvalsh(m).min() < 0:
                raise ValueError(f"{name} must be positive semidefinite")
            m.setflags(write=False)
            object.__setattr__(self, name, m)

    @property
    def H(self) -> np.ndarray:
        return np.eye(3)

    @property
    def d_z(self) -> int:
        return D_Z


@dataclass(frozen=True)
class FilterParams:
    p_nm: float = 0.001
    nu: float = 3.0
    tau: float = 8.0
    window: int = 8
    max_branches: int = 200
    max_no_meas_steps: int = 10
    # measurements required on an exploring leaf's path; None means ceil(window / 2)
    min_path_measurements: int | None = None

    def __post_init__(self) -> None:
        if not 0.0 < self.p_nm < 1.0:
            raise ValueError("p_nm must lie in (0, 1)")
        if not (self.nu > 0 and self.tau > 0):
            raise ValueError("nu and tau must be positive")
        if self.window < 1 or self.max_branches < 1 or self.max_no_meas_steps < 1:
            raise ValueError("window, max_branches and max_no_meas_steps must be >= 1")

    @property
    def required_measurements(self) -> int:
        if self.min_path_measurements is not None:
            return self.min_path_measurements
        return math.ceil(self.window / 2)


def no_measurement_cost(p_nm: float, d_z: int = D_Z) -> float:
    return -math.log(p_nm) - 0.5 * d_z * LOG_2PI


def _residual(z: np.ndarray, mean: np.ndarray) -> np.ndarray:
    r = np.asarray(z, dtype=float) - mean
    r[..., 2] = wrap_angles(r[..., 2])
    return r


def _z(z) -> np.ndarray:
    if isinstance(z, AlignmentMeasurement):
        return z.as_vector()
    return np.asarray(z, dtype=float).reshape(3)


def _innovation(belief: Gaussian3, z, model: KalmanModel):
    S = belief.cov + model.R
    sign, logdet = np.linalg.slogdet(S)
    if sign <= 0 or not np.isfinite(logdet):
        raise FilterError("innovation covariance is not positive definite")
    r = _residual(_z(z), belief.mean)
    Sinv = np.linalg.inv(S)
    return r, S, Sinv, logdet


def node_cost(belief: Gaussian3, z, model: KalmanModel = KalmanModel(), p_nm: float = 0.001) -> float:
    """Step cost of selecting ``z`` (or no measurement when ``z`` is None) at ``belief``.

    ``belief`` is the predicted prior for the step.
    """
    if z is None:
        return no_measurement_cost(p_nm, model.d_z)
    r, _, Sinv, logdet = _innovation(belief, z, model)
    return float(0.5 * (r @ Sinv @ r + logdet))


def mahalanobis_sq(belief: Gaussian3, z, model: KalmanModel = KalmanModel()) -> float:
    r, _, Sinv, _ = _innovation(belief, z, model)
    return float(r @ Sinv @ r)


def gate(belief: Gaussian3, z, model: KalmanModel = KalmanModel(), params: FilterParams = FilterParams()) -> bool:
    return mahalanobis_sq(belief, z, model) <= params.nu**2


def kalman_predict(belief: Gaussian3, model: KalmanModel = KalmanModel()) -> Gaussian3:
    cov = belief.cov + model.Q
    return Gaussian3(belief.mean, 0.5 * (cov + cov.T))


def kalman_update(belief: Gaussian3, z, model: KalmanModel = KalmanModel()) -> Gaussian3:
    mean, cov = _update(belief.mean[None], belief.cov[None], _z(z)[None], model.R)
    return Gaussian3(mean[0], cov[0])


def _update(means, covs, zs, R):
    """Batched Joseph-form update with ``H = I``."""
    S = covs + R
    try:
        Sinv = np.linalg.inv(S)
    except np.linalg.LinAlgError as exc:
        raise FilterError("singular innovation covariance") from exc
    K = covs @ Sinv
    r = _residual(zs, means)
    new_means = means + np.einsum("lij,lj->li", K, r)
    new_means[:, 2] = wrap_angles(new_means[:, 2])
    IK = np.eye(3) - K
    new_covs = IK @ covs @ np.swapaxes(IK, 1, 2) + K @ R @ np.swapaxes(K, 1, 2)
    new_covs = 0.5 * (new_covs + np.swapaxes(new_covs, 1, 2))
    return new_means, new_covs


class HypothesisNode:
    __slots__ = (
        "mean",
        "cov",
        "cumulative_cost",
        "step_cost",
        "parent",
        "depth",
        "measurement",
        "n_meas",
        "since_meas",
        "order",
    )

    def __init__(self, mean, cov, cumulative_cost, step_cost, parent, depth, measurement, n_meas, since_meas, order):
        self.mean = mean
        self.cov = cov
        self.cumulative_cost = cumulative_cost
        self.step_cost = step_cost
        self.parent = parent
        self.depth = depth
        self.measurement = measurement
        self.n_meas = n_meas
        self.since_meas = since_meas
        self.order = order

    @property
    def belief(self) -> Gaussian3:
        return Gaussian3(self.mean, self.cov)

    @property
    def selected_measurement(self) -> AlignmentMeasurement | None:
        return self.measurement

    def path(self) -> list[HypothesisNode]:
        """Nodes from the current root down to this node."""
        out = []
        node = self
        while node is not None:
            out.append(node)
            node = node.parent
        return out[::-1]

    def ancestor_at(self, depth: int) -> HypothesisNode:
        node = self
        while node.depth > depth:
            node = node.parent
        return node

    def __repr__(self) -> str:
        return f"HypothesisNode(depth={self.depth}, cost={self.cumulative_cost:.4f}, n_meas={self.n_meas})"


class TreeKind(enum.Enum):
    EXPLORING = "exploring"
    MAIN = "main"


class HypothesisTree:
    def __init__(self, root_belief: Gaussian3, kind: TreeKind = TreeKind.EXPLORING, created_at: int = 0,
                 root_measurement: AlignmentMeasurement | None = None):
        self.kind = kind
        self.created_at = created_at
        self._next_order = 0
        self.root = self._node(
            np.array(root_belief.mean), np.array(root_belief.cov), 0.0, 0.0, None, 0, root_measurement, 0, 0
        )
        self.leaves: list[HypothesisNode] = [self.root]

    def _node(self, *args) -> HypothesisNode:
        node = HypothesisNode(*args, self._next_order)
        self._next_order += 1
        return node

    @property
    def depth(self) -> int:
        """Number of ticks between the root and the leaves."""
        return self.leaves[0].depth - self.root.depth

    def best_leaf(self) -> HypothesisNode:
        return min(self.leaves, key=lambda n: (n.cumulative_cost, n.order))

    def nodes(self) -> list[HypothesisNode]:
        """Every node reachable from a leaf, root included."""
        seen: dict[int, HypothesisNode] = {}
        for leaf in self.leaves:
            node = leaf
            while node is not None and id(node) not in seen:
                seen[id(node)] = node
                node = node.parent
        return sorted(seen.values(), key=lambda n: (n.depth, n.order))


def new_exploring_tree(z: AlignmentMeasurement, model: KalmanModel, created_at: int) -> HypothesisTree:
    return HypothesisTree(Gaussian3(z.as_vector(), model.R), TreeKind.EXPLORING, created_at, z)


def extend(
    tree: HypothesisTree,
    measurements: list[AlignmentMeasurement],
    model: KalmanModel = KalmanModel(),
    params: FilterParams = FilterParams(),
) -> HypothesisTree:
    """Grow every leaf by one tick (in place); returns ``tree``."""
    leaves = tree.leaves
    means = np.array([n.mean for n in leaves])
    covs = np.array([n.cov for n in leaves]) + model.Q
    covs = 0.5 * (covs + np.swapaxes(covs, 1, 2))
    c_none = no_measurement_cost(params.p_nm, model.d_z)

    gated_l = gated_n = np.zeros(0, dtype=int)
    if measurements:
        Z = np.array([m.as_vector() for m in measurements])
        S = covs + model.R
        sign, logdet = np.linalg.slogdet(S)
        if np.any(sign <= 0):
            raise FilterError("innovation covariance is not positive definite")
        Sinv = np.linalg.inv(S)
        r = _residual(Z[None, :, :], means[:, None, :])
        maha = np.einsum("lni,lij,lnj->ln", r, Sinv, r)
        costs = 0.5 * (maha + logdet[:, None])
        gated_l, gated_n = np.nonzero(maha <= params.nu**2)
        if gated_l.size:
            up_means, up_covs = _update(means[gated_l], covs[gated_l], Z[gated_n], model.R)

    children: list[HypothesisNode] = []
    g = 0
    for l, leaf in enumerate(leaves):
        children.append(
            tree._node(means[l], covs[l], leaf.cumulative_cost + c_none, c_none, leaf,
                       leaf.depth + 1, None, leaf.n_meas, leaf.since_meas + 1)
        )
        while g < gated_l.size and gated_l[g] == l:
            n = gated_n[g]
            c = float(costs[l, n])
            children.append(
                tree._node(up_means[g], up_covs[g], leaf.cumulative_cost + c, c, leaf,
                           leaf.depth + 1, measurements[n], leaf.n_meas + 1, 0)
            )
            g += 1
    tree.leaves = children
    return tree


def prune(tree: HypothesisTree, params: FilterParams = FilterParams()) -> HypothesisTree:
    """Sliding-window then max-branches pruning (in place); returns ``tree``."""
    if tree.depth > params.window:
        best = tree.best_leaf()
        new_root = best.ancestor_at(best.depth - params.window)
        tree.leaves = [n for n in tree.leaves if n.ancestor_at(new_root.depth) is new_root]
        new_root.parent = None
        tree.root = new_root
        offset = new_root.cumulative_cost
        if offset != 0.0:
            for node in tree.nodes():
                node.cumulative_cost -= offset
        new_root.step_cost = 0.0
    if len(tree.leaves) > params.max_branches:
        keep = sorted(tree.leaves, key=lambda n: (n.cumulative_cost, n.order))[: params.max_branches]
        tree.leaves = sorted(keep, key=lambda n: n.order)
    return tree


def extend_and_prune(
    tree: HypothesisTree,
    measurements: list[AlignmentMeasurement],
    model: KalmanModel = KalmanModel(),
    params: FilterParams = FilterParams(),
) -> HypothesisTree:
    """Same result as ``prune(extend(tree, ...))`` without building discarded children.

    Child costs are computed as arrays first; node objects and Kalman updates
    are made only for children that survive both pruning rules. Survivors keep
    the creation order they would have had, so tie-breaking is unchanged.
    """
    leaves = tree.leaves
    n_leaves = len(leaves)
    means = np.array([n.mean for n in leaves])
    covs = np.array([n.cov for n in leaves]) + model.Q
    covs = 0.5 * (covs + np.swapaxes(covs, 1, 2))
    c_none = no_measurement_cost(params.p_nm, model.d_z)
    base = np.array([n.cumulative_cost for n in leaves])

    gated_l = gated_n = np.zeros(0, dtype=int)
    costs = np.zeros((n_leaves, 0))
    if measurements:
        Z = np.array([m.as_vector() for m in measurements])
        S = covs + model.R
        sign, logdet = np.linalg.slogdet(S)
        if np.any(sign <= 0):
            raise FilterError("innovation covariance is not positive definite")
        Sinv = np.linalg.inv(S)
        r = _residual(Z[None, :, :], means[:, None, :])
        maha = np.einsum("lni,lij,lnj->ln", r, Sinv, r)
        costs = 0.5 * (maha + logdet[:, None])
        gated_l, gated_n = np.nonzero(maha <= params.nu**2)

    # children in creation order: per leaf, the no-measurement child then gated ones
    par = np.concatenate([np.arange(n_leaves), gated_l])
    meas = np.concatenate([np.full(n_leaves, -1), gated_n])
    perm = np.lexsort((meas, par))
    par, meas = par[perm], meas[perm]
    step_c = np.where(meas < 0, c_none, costs[par, np.maximum(meas, 0)] if costs.size else c_none)
    cum = base[par] + step_c
    n_child = par.size
    keep = np.ones(n_child, dtype=bool)

    offset = 0.0
    new_root = None
    child_depth = leaves[0].depth + 1
    if child_depth - tree.root.depth > params.window:
        best = int(np.argmin(cum))
        target = child_depth - params.window
        new_root = leaves[par[best]].ancestor_at(target)
        under = np.array([leaf.ancestor_at(target) is new_root for leaf in leaves])
        keep = under[par]
        offset = new_root.cumulative_cost

    # rebased exactly as prune() would rebase a freshly built child
    if offset != 0.0:
        cum = cum - offset
    idx = np.flatnonzero(keep)
    if idx.size > params.max_branches:
        sel = idx[np.lexsort((idx, cum[idx]))[: params.max_branches]]
        idx = np.sort(sel)

    if new_root is not None:
        new_root.parent = None
        tree.root = new_root
        survivors = {id(leaves[p]): leaves[p] for p in par[idx]}
        tree.leaves = list(survivors.values())
        if offset != 0.0:
            for node in tree.nodes():
                node.cumulative_cost -= offset
        new_root.step_cost = 0.0

    is_meas = meas[idx] >= 0
    up_idx = idx[is_meas]
    if up_idx.size:
        Z = np.array([m.as_vector() for m in measurements])
        up_means, up_covs = _update(means[par[up_idx]], covs[par[up_idx]], Z[meas[up_idx]], model.R)
    first = tree._next_order
    children: list[HypothesisNode] = []
    g = 0
    for c in idx:
        l = par[c]
        leaf = leaves[l]
        order = first + int(c)
        if meas[c] < 0:
            node = HypothesisNode(means[l], covs[l], float(cum[c]), c_none, leaf,
                                  child_depth, None, leaf.n_meas, leaf.since_meas + 1, order)
        else:
            node = HypothesisNode(up_means[g], up_covs[g], float(cum[c]), float(step_c[c]), leaf,
                                  child_depth, measurements[meas[c]], leaf.n_meas + 1, 0, order)
            g += 1
        children.append(node)
    tree._next_order = first + n_child
    tree.leaves = children
    return tree


class Mode(enum.Enum):
    EXPLORING = "exploring"
    LOCKED = "locked"


@dataclass
class TcaffState:
    window: int = 8
    mode: Mode = Mode.EXPLORING
    exploring_trees: list[HypothesisTree] = field(default_factory=list)
    main_tree: HypothesisTree | None = None
    measurement_buffer: deque = field(default=None)
    estimate: Gaussian3 | None = None
    step_index: int = 0

    def __post_init__(self) -> None:
        if self.measurement_buffer is None:
            self.measurement_buffer = deque(maxlen=self.window)

    @property
    def locked(self) -> bool:
        return self.mode is Mode.LOCKED


def _explore_tick(state: TcaffState, zs, tick: int, model: KalmanModel, params: FilterParams) -> None:
    for tree in state.exploring_trees:
        extend_and_prune(tree, zs, model, params)
    state.exploring_trees.extend(new_exploring_tree(z, model, tick) for z in zs)


def _try_promote(state: TcaffState, params: FilterParams) -> None:
    full = [t for t in state.exploring_trees if t.depth >= params.window]
    if full:
        cands = [(t.best_leaf(), t) for t in full]
        leaf, tree = min(cands, key=lambda c: (c[0].cumulative_cost, c[1].created_at, c[0].order))
        if leaf.cumulative_cost < params.tau and leaf.n_meas >= params.required_measurements:
            tree.kind = TreeKind.MAIN
            state.main_tree = tree
            state.mode = Mode.LOCKED
            state.exploring_trees = []
            state.estimate = leaf.belief
            return
    # a tree whose seed has left the window without promotion is discarded
    state.exploring_trees = [t for t in state.exploring_trees if t.depth < params.window]


def step(
    state: TcaffState,
    measurements: list[AlignmentMeasurement],
    model: KalmanModel = KalmanModel(),
    params: FilterParams = FilterParams(),
) -> TcaffState:
    """Advance the filter by one map-sharing tick (updates ``state`` in place)."""
    zs = list(measurements)
    tick = state.step_index
    state.measurement_buffer.append((tick, zs))

    if state.mode is Mode.LOCKED:
        tree = extend_and_prune(state.main_tree, zs, model, params)
        best = tree.best_leaf()
        if best.since_meas >= params.max_no_meas_steps:
            state.mode = Mode.EXPLORING
            state.main_tree = None
            state.estimate = None
            # rebuild exploring trees from the buffered window
            state.exploring_trees = []
            for t, buffered in state.measurement_buffer:
                _explore_tick(state, buffered, t, model, params)
        else:
            state.estimate = best.belief
    else:
        _explore_tick(state, zs, tick, model, params)
        _try_promote(state, params)

    state.step_index += 1
    return state


class TcaffFilter:
    """Stateful wrapper holding one pairwise alignment filter."""

    def __init__(self, model: KalmanModel | None = None, params: FilterParams | None = None):
        self.model = model or KalmanModel()
        self.params = params or FilterParams()
        self.state = TcaffState(window=self.params.window)

    def step(self, measurements: list[AlignmentMeasurement]) -> Gaussian3 | None:
        step(self.state, measurements, self.model, self.params)
        return self.state.estimate

    @property
    def mode(self) -> Mode:
        return self.state.mode

    @property
    def estimate(self) -> Gaussian3 | None:
        return self.state.estimate

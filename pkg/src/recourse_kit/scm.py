"""Linear additive-noise structural causal models.

Every node follows ``x_i = w_i . x_parents(i) + b_i + u_i`` over a DAG, so the
noise-to-observation map is an invertible affine function: evaluating it in
topological order gives the forward map, and subtracting each node's parent
contribution recovers the noise in closed form.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Iterable, Mapping

import numpy as np

from .errors import GraphCycleError

Vector = np.ndarray


@dataclass(frozen=True)
class FeatureMeta:
    """Per-feature metadata used for distances and search constraints.

    ``sigma`` is the scale (standard deviation) dividing that coordinate in
    both distance metrics. Immutable features are pinned to their factual
    value during search and excluded from distance sums.
    """

    name: str
    index: int
    sigma: float = 1.0
    mutable: bool = True
    categorical: bool = False

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"feature {self.name!r}: sigma must be positive, got {self.sigma}")


@dataclass(frozen=True)
class LinearSCM:
    """A linear additive-noise SCM over ``n`` nodes.

    ``parents[i]`` lists the parent indices of node ``i`` and ``weights[i]``
    the matching coefficients; ``noise_free[i]`` marks nodes whose mechanism
    ignores its noise term (used to represent hard interventions).
    """

    parents: tuple[tuple[int, ...], ...]
    weights: tuple[tuple[float, ...], ...]
    intercepts: tuple[float, ...]
    noise_sigma: tuple[float, ...]
    features: tuple[FeatureMeta, ...]
    noise_free: tuple[bool, ...] = field(default=())

    def __post_init__(self):
        n = len(self.parents)
        if not self.noise_free:
            object.__setattr__(self, "noise_free", (False,) * n)
        for name in ("weights", "intercepts", "noise_sigma", "features", "noise_free"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} must have length {n}")
        for i, (pa, w) in enumerate(zip(self.parents, self.weights)):
            if len(pa) != len(w):
                raise ValueError(f"node {i}: {len(pa)} parents but {len(w)} weights")
            if len(set(pa)) != len(pa):
                raise ValueError(f"node {i}: duplicate parent indices")
            for p in pa:
                if not 0 <= p < n:
                    raise IndexError(f"node {i}: parent index {p} out of range")
        if {f.index for f in self.features} != set(range(n)):
            raise ValueError("feature indices must be unique and contiguous from 0")
        for s in self.noise_sigma:
            if not s > 0:
                raise ValueError(f"noise_sigma must be positive, got {s}")
        if n and not any(f.mutable for f in self.features):
            raise ValueError("at least one feature must be mutable")

    @property
    def n(self) -> int:
        return len(self.parents)

    @property
    def mutable_indices(self) -> tuple[int, ...]:
        return tuple(f.index for f in self.features if f.mutable)

    @property
    def frozen_indices(self) -> tuple[int, ...]:
        return tuple(f.index for f in self.features if not f.mutable)

    def feature_sigma(self) -> Vector:
        return np.array([f.sigma for f in self.features], dtype=float)

    def weight_matrix(self) -> Vector:
        """Dense (n, n) matrix W with W[i, p] = weight of parent p on node i."""
        return _weight_matrix(self)

    def topological_order(self) -> tuple[int, ...]:
        return topological_order(self)

    def to_dict(self) -> dict:
        nodes = []
        for i, f in enumerate(self.features):
            nodes.append(
                {
                    "name": f.name,
                    "parents": list(self.parents[i]),
                    "weights": list(self.weights[i]),
                    "intercept": self.intercepts[i],
                    "noise_sigma": self.noise_sigma[i],
                    "sigma": f.sigma,
                    "mutable": f.mutable,
                    "categorical": f.categorical,
                }
            )
        return {"nodes": nodes}

    @classmethod
    def from_dict(cls, doc: Mapping) -> "LinearSCM":
        nodes = doc["nodes"]
        features = tuple(
            FeatureMeta(
                name=nd["name"],
                index=i,
                sigma=float(nd["sigma"]),
                mutable=bool(nd["mutable"]),
                categorical=bool(nd["categorical"]),
            )
            for i, nd in enumerate(nodes)
        )
        return cls(
            parents=tuple(tuple(int(p) for p in nd["parents"]) for nd in nodes),
            weights=tuple(tuple(float(w) for w in nd["weights"]) for nd in nodes),
            intercepts=tuple(float(nd["intercept"]) for nd in nodes),
            noise_sigma=tuple(float(nd["noise_sigma"]) for nd in nodes),
            features=features,
        )


@lru_cache(maxsize=256)
def _weight_matrix(scm: LinearSCM) -> Vector:
    W = np.zeros((scm.n, scm.n))
    for i, (pa, w) in enumerate(zip(scm.parents, scm.weights)):
        for p, wp in zip(pa, w):
            W[i, p] = wp
    W.setflags(write=False)
    return W


@lru_cache(maxsize=256)
def _topological_order(scm: LinearSCM) -> tuple[int, ...]:
    # Kahn's algorithm with a stable index-ordered frontier.
    n = scm.n
    indeg = [len(pa) for pa in scm.parents]
    children: list[list[int]] = [[] for _ in range(n)]
    for i, pa in enumerate(scm.parents):
        for p in pa:
            children[p].append(i)
    frontier = sorted(i for i in range(n) if indeg[i] == 0)
    order: list[int] = []
    while frontier:
        i = frontier.pop(0)
        order.append(i)
        for c in children[i]:
            indeg[c] -= 1
            if indeg[c] == 0:
                frontier.append(c)
        frontier.sort()
    if len(order) != n:
        cyclic = min(i for i in range(n) if indeg[i] > 0)
        raise GraphCycleError(cyclic)
    return tuple(order)


def topological_order(scm: LinearSCM) -> tuple[int, ...]:
    """Validate acyclicity and return a parent-before-child node order.

    Raises GraphCycleError naming one node on a cycle. Source nodes are
    emitted in index order, so the result is deterministic.
    """
    return _topological_order(scm)


def reduced_form(scm: LinearSCM, u: Vector) -> Vector:
    """Map a noise vector to the observation it generates."""
    u = _check_vector(u, scm.n, "u")
    W = scm.weight_matrix()
    x = np.zeros(scm.n)
    for i in scm.topological_order():
        x[i] = W[i] @ x + scm.intercepts[i]
        if not scm.noise_free[i]:
            x[i] += u[i]
    return x


def reduced_form_batch(scm: LinearSCM, U: Vector) -> Vector:
    """Vectorized ``reduced_form`` for an (m, n) array of noise vectors."""
    U = np.asarray(U, dtype=float)
    W = scm.weight_matrix()
    X = np.zeros_like(U)
    for i in scm.topological_order():
        X[:, i] = X @ W[i] + scm.intercepts[i]
        if not scm.noise_free[i]:
            X[:, i] += U[:, i]
    return X


def abduct(scm: LinearSCM, x: Vector) -> Vector:
    """Recover the noise vector consistent with an observation.

    Closed form for additive mechanisms: ``u_i = x_i - w_i . x_pa(i) - b_i``.
    For noise-free (intervened) nodes the residual is reported as 0.
    """
    x = _check_vector(x, scm.n, "x")
    u = x - scm.weight_matrix() @ x - np.asarray(scm.intercepts)
    if any(scm.noise_free):
        u = np.where(scm.noise_free, 0.0, u)
    return u


def abduct_batch(scm: LinearSCM, X: Vector) -> Vector:
    """Vectorized ``abduct`` for an (m, n) array of observations."""
    X = np.asarray(X, dtype=float)
    U = X - X @ scm.weight_matrix().T - np.asarray(scm.intercepts)
    if any(scm.noise_free):
        U[:, list(np.flatnonzero(scm.noise_free))] = 0.0
    return U


def apply_intervention(scm: LinearSCM, intervention: Mapping[int, float]) -> LinearSCM:
    """Return the surgically modified SCM where each intervened node is clamped.

    The clamped node's mechanism becomes the constant intervention value: its
    parents are detached and its noise term is suppressed. Downstream
    mechanisms are untouched and keep reading the (now constant) node.
    """
    if not intervention:
        return scm
    for i in intervention:
        if not 0 <= i < scm.n:
            raise IndexError(f"intervention index {i} out of range for {scm.n} nodes")
        if not np.isfinite(intervention[i]):
            raise ValueError(f"intervention value for node {i} is not finite")
    parents = list(scm.parents)
    weights = list(scm.weights)
    intercepts = list(scm.intercepts)
    noise_free = list(scm.noise_free)
    for i, value in intervention.items():
        parents[i] = ()
        weights[i] = ()
        intercepts[i] = float(value)
        noise_free[i] = True
    return replace(
        scm,
        parents=tuple(parents),
        weights=tuple(weights),
        intercepts=tuple(intercepts),
        noise_free=tuple(noise_free),
    )


def interventional_counterfactual(
    scm: LinearSCM, x: Vector, intervention: Mapping[int, float]
) -> Vector:
    """Abduction, action, prediction: evaluate the intervened SCM at the
    noise recovered from ``x``."""
    u = abduct(scm, x)
    return reduced_form(apply_intervention(scm, intervention), u)


def counterfactual_noise(
    scm: LinearSCM, x: Vector, intervention: Mapping[int, float]
) -> Vector:
    """Noise vector that reproduces the interventional counterfactual through
    the *unmodified* mechanisms.

    Pushing this vector through ``reduced_form`` of the original SCM yields
    exactly ``interventional_counterfactual(scm, x, intervention)``: altering
    noises subsumes graph surgery for invertible linear SCMs.
    """
    return abduct(scm, interventional_counterfactual(scm, x, intervention))


def descendants(scm: LinearSCM, nodes: Iterable[int]) -> set[int]:
    """All nodes reachable from ``nodes`` via directed edges (excluding the
    seeds themselves unless reachable through a cycle-free path)."""
    children: list[list[int]] = [[] for _ in range(scm.n)]
    for i, pa in enumerate(scm.parents):
        for p in pa:
            children[p].append(i)
    seen: set[int] = set()
    stack = list(nodes)
    while stack:
        for c in children[stack.pop()]:
            if c not in seen:
                seen.add(c)
                stack.append(c)
    return seen


def scm_to_json(scm: LinearSCM, classifier_doc: Mapping | None = None) -> str:
    """Serialize an SCM (optionally with a classifier document) to JSON.

    Floats are emitted with 17 significant digits so parsing the text
    recovers every coefficient bit-exactly.
    """
    doc = scm.to_dict()
    if classifier_doc is not None:
        doc["classifier"] = dict(classifier_doc)
    return json.dumps(_format_floats(doc), indent=2)


def scm_from_json(text: str) -> tuple[LinearSCM, dict | None]:
    doc = json.loads(text)
    scm = LinearSCM.from_dict(doc)
    return scm, doc.get("classifier")


def _format_floats(obj):
    if isinstance(obj, float):
        return float(format(obj, ".17g"))
    if isinstance(obj, dict):
        return {k: _format_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_format_floats(v) for v in obj]
    return obj


def _check_vector(v, n: int, name: str) -> Vector:
    v = np.asarray(v, dtype=float)
    if v.shape != (n,):
        raise ValueError(f"{name} must have shape ({n},), got {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite entries")
    return v

"""Distance metrics, the penalized search objective, and its solver.

The class-flip constraint is folded into the objective as an escalating
cross-entropy penalty. All search spaces used by the explanation methods
(latent coordinates, direct feature edits, intervention values) reduce to an
affine map ``z -> x``, so one first-order solver covers every method: smoothed
gradient descent with an Armijo line search, a geometric penalty schedule,
and a final bisection on the penalty weight that pins the solution to the
decision boundary.

Reported distances are always the exact metrics (weighted l1 in feature
space, weighted l2 in latent space); smoothing is purely a solver device.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .errors import EmptyFeasibleSetError
from .learners import LogisticModel, _sigmoid
from .scm import FeatureMeta, LinearSCM, abduct

Vector = np.ndarray


# ---------------------------------------------------------------------------
# metrics


def _active_and_sigma(features: Sequence[FeatureMeta]):
    active = np.array([f.index for f in features if f.mutable], dtype=int)
    sigma = np.array([f.sigma for f in features if f.mutable], dtype=float)
    return active, sigma


def distance_x(a, b, features: Sequence[FeatureMeta]) -> float:
    """Scale-weighted l1 distance over the mutable coordinates."""
    a, b = _pair(a, b, len(features))
    active, sigma = _active_and_sigma(features)
    return float(np.sum(np.abs(a[active] - b[active]) / sigma))


def distance_u(a, b, features: Sequence[FeatureMeta], sigma=None) -> float:
    """Scale-weighted l2 distance over the mutable coordinates.

    ``sigma`` overrides the per-feature scales (e.g. to weight by noise
    standard deviations instead of feature standard deviations).
    """
    a, b = _pair(a, b, len(features))
    active, feat_sigma = _active_and_sigma(features)
    if sigma is not None:
        feat_sigma = np.asarray(sigma, dtype=float)[active]
    return float(np.sqrt(np.sum(((a[active] - b[active]) / feat_sigma) ** 2)))


def _pair(a, b, n):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != (n,) or b.shape != (n,):
        raise ValueError(f"expected two vectors of shape ({n},), got {a.shape} and {b.shape}")
    return a, b


def _softabs(t: Vector, mu: float) -> Vector:
    # sqrt(t^2 + mu^2) - mu: exact zero at 0, within mu of |t| everywhere
    return np.sqrt(t * t + mu * mu) - mu


def _softabs_grad(t: Vector, mu: float) -> Vector:
    return t / np.sqrt(t * t + mu * mu)


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class SolverConfig:
    """Penalty-schedule and line-search knobs.

    ``beta_*`` control the escalating constraint penalty, ``l1_smoothing_mu``
    the final smoothing width, and ``refine_steps`` the bisection that tightens
    the returned point onto the decision boundary once feasible. ``margin``
    optionally demands a probability margin beyond the decision threshold.
    ``latent_sigma`` selects the scales for the latent distance: feature
    standard deviations (default) or the SCM noise standard deviations.
    """

    beta_init: float = 1.0
    beta_growth: float = 2.0
    beta_max: float = 2.0**20
    step_init: float = 0.1
    max_iters: int = 2000
    tol_grad: float = 1e-8
    l1_smoothing_mu: float = 1e-6
    mu_stages: int = 4
    refine_steps: int = 60
    margin: float = 0.0
    restarts: int = 0
    seed: int = 0
    latent_sigma: str = "feature"

    def __post_init__(self):
        if not self.beta_growth > 1:
            raise ValueError("beta_growth must exceed 1")
        if not self.tol_grad > 0 or not self.l1_smoothing_mu > 0:
            raise ValueError("tol_grad and l1_smoothing_mu must be positive")
        if self.latent_sigma not in ("feature", "noise"):
            raise ValueError("latent_sigma must be 'feature' or 'noise'")


# ---------------------------------------------------------------------------
# objective


@dataclass
class CounterfactualObjective:
    """Search problem: move ``x`` into the target class at minimal cost.

    The decision variable ``z`` parameterizes candidate observations through
    an affine map; the cost blends the exact feature-space and latent-space
    distances with weights ``w_x`` and ``lam``. Built by the ``*_problem``
    constructors below, which differ only in what ``z`` means.
    """

    scm: LinearSCM
    classifier: LogisticModel
    x_factual: Vector
    target: int
    Mx: Vector
    cx: Vector
    z0: Vector
    w_x: float = 1.0
    lam: float = 0.0
    z_anchor: Vector | None = None
    sigma_z: Vector | None = None
    kind: str = "latent"

    def __post_init__(self):
        self.u_factual = abduct(self.scm, self.x_factual)
        self.active_x, self.sigma_x = _active_and_sigma(self.scm.features)
        self._Mx_act = self.Mx[self.active_x]
        self._clf_w = np.asarray(self.classifier.coef_, dtype=float)
        self._score_M = self._clf_w @ self.Mx
        self._score_c = float(self._clf_w @ self.cx + self.classifier.intercept_)
        self._scale = self.w_x + self.lam if (self.w_x + self.lam) > 0 else 1.0

    @property
    def m(self) -> int:
        return self.Mx.shape[1]

    def x_of_z(self, z: Vector) -> Vector:
        return self.Mx @ z + self.cx

    def x_of_z_batch(self, Z: Vector) -> Vector:
        return Z @ self.Mx.T + self.cx

    def u_of_z(self, z: Vector) -> Vector:
        if self.kind == "latent":
            u = self.u_factual.copy()
            u[list(self.scm.mutable_indices)] = z
            frozen = list(self.scm.frozen_indices)
            if frozen:
                u_full = abduct(self.scm, self.x_of_z(z))
                u[frozen] = u_full[frozen]
            return u
        return abduct(self.scm, self.x_of_z(z))

    def feasible(self, x: Vector, margin: float = 0.0) -> bool:
        if margin == 0.0:
            return self.classifier.classify(x) == self.target
        p = self.classifier.probability(x)
        if self.target == 1:
            return p >= self.classifier.threshold + margin
        return p <= self.classifier.threshold - margin

    def exact_distances(self, z: Vector) -> tuple[float, float]:
        x = self.x_of_z(z)
        d_x = distance_x(self.x_factual, x, self.scm.features)
        if self.z_anchor is None:
            d_u = distance_u(self.u_factual, self.u_of_z(z), self.scm.features,
                             sigma=self._full_sigma_z())
        else:
            d_u = float(np.sqrt(np.sum(((z - self.z_anchor) / self.sigma_z) ** 2)))
        return d_x, d_u

    def exact_objective(self, z: Vector) -> float:
        d_x, d_u = self.exact_distances(z)
        return self.w_x * d_x + self.lam * d_u

    def _full_sigma_z(self) -> Vector | None:
        return None

    def value_and_grad(self, z: Vector, beta: float, mu: float) -> tuple[float, Vector]:
        """Smoothed penalized objective and its analytic gradient in z.

        value = (w_x * d_x_mu + lam * d_u_mu) / (w_x + lam)
                + beta * CrossEntropy(h(x(z)), target)
        """
        t = (self.x_of_z(z)[self.active_x] - self.x_factual[self.active_x]) / self.sigma_x
        value = self.w_x * float(np.sum(_softabs(t, mu)))
        grad = self.w_x * (self._Mx_act.T @ (_softabs_grad(t, mu) / self.sigma_x))
        if self.lam > 0 and self.z_anchor is not None:
            r = (z - self.z_anchor) / self.sigma_z
            core = float(np.sqrt(r @ r + mu * mu))
            value += self.lam * (core - mu)
            grad += self.lam * (r / self.sigma_z) / core
        value /= self._scale
        grad /= self._scale

        s = float(self._score_M @ z + self._score_c)
        y = float(self.target)
        value += beta * (np.logaddexp(0.0, s) - y * s)
        grad += beta * (float(_sigmoid(np.array([s]))[0]) - y) * self._score_M
        return value, grad

    def value_and_grad_at_u(self, u_cf: Vector, beta: float, mu: float) -> tuple[float, Vector]:
        """Evaluate at a full latent vector (latent-parameterized problems).

        The gradient is over the free (mutable) coordinates; immutable
        coordinates are determined by the clamping constraints.
        """
        if self.kind != "latent":
            raise ValueError("full-latent evaluation requires a latent-parameterized problem")
        u_cf = np.asarray(u_cf, dtype=float)
        return self.value_and_grad(u_cf[list(self.scm.mutable_indices)], beta, mu)


def latent_problem(
    scm: LinearSCM,
    classifier: LogisticModel,
    x_factual: Vector,
    target: int,
    lam: float,
    w_x: float = 1.0,
    latent_sigma: str = "feature",
    u_anchor: Vector | None = None,
) -> CounterfactualObjective:
    """z = noise values of the mutable features; immutable features are pinned
    to their factual values by compensating their noise terms.

    ``u_anchor`` overrides the latents believed to have generated ``x``
    (default: abduction under ``scm``). Passing latents abducted under a
    different mechanism makes the search account for mechanism misestimation.
    """
    u_fact = np.asarray(u_anchor, dtype=float) if u_anchor is not None else abduct(scm, x_factual)
    mutable = list(scm.mutable_indices)
    col = {i: k for k, i in enumerate(mutable)}
    m = len(mutable)
    W = scm.weight_matrix()
    Mx = np.zeros((scm.n, m))
    cx = np.zeros(scm.n)
    for i in scm.topological_order():
        if i in col:
            Mx[i] = W[i] @ Mx
            Mx[i, col[i]] += 1.0
            cx[i] = W[i] @ cx + scm.intercepts[i]
        else:
            cx[i] = x_factual[i]
    sigma_z = _latent_scales(scm, latent_sigma)[mutable]
    return CounterfactualObjective(
        scm=scm, classifier=classifier, x_factual=np.asarray(x_factual, dtype=float),
        target=target, Mx=Mx, cx=cx, z0=u_fact[mutable].copy(), w_x=w_x, lam=lam,
        z_anchor=u_fact[mutable].copy(), sigma_z=sigma_z, kind="latent",
    )


def direct_problem(
    scm: LinearSCM, classifier: LogisticModel, x_factual: Vector, target: int
) -> CounterfactualObjective:
    """z = the mutable feature values themselves, with no causal propagation."""
    mutable = list(scm.mutable_indices)
    Mx = np.zeros((scm.n, len(mutable)))
    cx = np.zeros(scm.n)
    for k, i in enumerate(mutable):
        Mx[i, k] = 1.0
    for i in scm.frozen_indices:
        cx[i] = x_factual[i]
    return CounterfactualObjective(
        scm=scm, classifier=classifier, x_factual=np.asarray(x_factual, dtype=float),
        target=target, Mx=Mx, cx=cx, z0=np.asarray(x_factual, dtype=float)[mutable].copy(),
        w_x=1.0, lam=0.0, kind="direct",
    )


def intervention_problem(
    scm: LinearSCM,
    classifier: LogisticModel,
    x_factual: Vector,
    target: int,
    subset: Sequence[int],
) -> CounterfactualObjective:
    """z = hard-intervention values for ``subset``; every other node follows
    its mechanism at the factual noise, so x(z) is the interventional
    counterfactual of the subset at those values."""
    u_fact = abduct(scm, x_factual)
    subset = list(subset)
    col = {i: k for k, i in enumerate(subset)}
    W = scm.weight_matrix()
    Mx = np.zeros((scm.n, len(subset)))
    cx = np.zeros(scm.n)
    for i in scm.topological_order():
        if i in col:
            Mx[i, col[i]] = 1.0
        else:
            Mx[i] = W[i] @ Mx
            cx[i] = W[i] @ cx + scm.intercepts[i] + u_fact[i]
    return CounterfactualObjective(
        scm=scm, classifier=classifier, x_factual=np.asarray(x_factual, dtype=float),
        target=target, Mx=Mx, cx=cx, z0=np.asarray(x_factual, dtype=float)[subset].copy(),
        w_x=1.0, lam=0.0, kind="intervention",
    )


def _latent_scales(scm: LinearSCM, latent_sigma: str) -> Vector:
    if latent_sigma == "noise":
        return np.asarray(scm.noise_sigma, dtype=float)
    return scm.feature_sigma()


# ---------------------------------------------------------------------------
# solver


@dataclass
class SolveTrace:
    rows: list = field(default_factory=list)

    def record(self, iteration, beta, value, d_x, d_u, feasible):
        self.rows.append((iteration, beta, value, d_x, d_u, feasible))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("iter,beta,objective,d_x,d_u,constraint_satisfied\n")
        for it, beta, value, d_x, d_u, ok in self.rows:
            buf.write(f"{it},{beta:.6g},{value:.12g},{d_x:.12g},{d_u:.12g},{int(ok)}\n")
        return buf.getvalue()


@dataclass
class SolveResult:
    z: Vector
    x_cf: Vector
    u_cf: Vector
    d_x: float
    d_u: float
    converged: bool
    iterations: int
    beta_final: float
    trace: SolveTrace


def penalty_solve(objective: CounterfactualObjective, cfg: SolverConfig | None = None) -> SolveResult:
    """Escalate the constraint penalty until the target class is reached,
    then bisect the penalty weight to tighten onto the decision boundary.

    Returns ``converged=False`` when the schedule exhausts ``beta_max``
    without producing a feasible point.
    """
    cfg = cfg or SolverConfig()
    if objective.m == 0:
        raise ValueError("objective has no free coordinates")

    trace = SolveTrace()
    z0 = objective.z0.copy()
    if objective.feasible(objective.x_factual, cfg.margin):
        # already in the target class: echo the factual bit-exactly
        trace.record(0, 0.0, 0.0, 0.0, 0.0, True)
        return SolveResult(
            z=z0, x_cf=objective.x_factual.copy(), u_cf=objective.u_factual.copy(),
            d_x=0.0, d_u=0.0, converged=True, iterations=0, beta_final=0.0, trace=trace,
        )

    starts = [z0]
    if cfg.restarts > 0:
        rng = np.random.default_rng(cfg.seed)
        scale = objective.sigma_z if objective.sigma_z is not None else np.ones(objective.m)
        starts += [z0 + 0.5 * scale * rng.standard_normal(objective.m) for _ in range(cfg.restarts)]

    best = None
    total_iters = 0
    for start in starts:
        out = _solve_single(objective, start, cfg, trace)
        total_iters += out[3]
        if out[0] is None:
            continue
        if best is None or out[1] < best[1]:
            best = out
    if best is None:
        z = starts[0]
        d_x, d_u = objective.exact_distances(z)
        return _result(objective, z, d_x, d_u, False, total_iters, cfg.beta_max, trace)
    z, _, beta, _ = best
    d_x, d_u = objective.exact_distances(z)
    return _result(objective, z, d_x, d_u, True, total_iters, beta, trace)


def _solve_single(objective, z0, cfg, trace):
    """One escalation + refinement pass; returns (z or None, exact value, beta, iters)."""
    iters = 0
    z = z0.copy()
    beta = cfg.beta_init
    beta_lo, beta_hi, z_hi = 0.0, None, None
    while beta <= cfg.beta_max:
        z, used = _inner_solve(objective, z, beta, cfg, full_schedule=True)
        iters += used
        feas = objective.feasible(objective.x_of_z(z), cfg.margin)
        d_x, d_u = objective.exact_distances(z)
        trace.record(iters, beta, objective.exact_objective(z), d_x, d_u, feas)
        if feas:
            beta_hi, z_hi = beta, z.copy()
            break
        beta_lo = beta
        beta *= cfg.beta_growth
    if beta_hi is None:
        return None, np.inf, cfg.beta_max, iters

    def polished(z_cand):
        z_p = _boundary_polish(objective, z_cand, cfg)
        return z_p, objective.exact_objective(z_p)

    best_z, best_val = polished(z_hi)
    z_warm = z_hi
    lo, hi = beta_lo, beta_hi
    for _ in range(cfg.refine_steps):
        if lo > 0 and hi / lo < 1.0 + 1e-12:
            break
        mid = hi / 4.0 if lo == 0.0 else float(np.sqrt(lo * hi))
        z_mid, used = _inner_solve(objective, z_warm.copy(), mid, cfg, full_schedule=False)
        iters += used
        z_warm = z_mid
        feas = objective.feasible(objective.x_of_z(z_mid), cfg.margin)
        if feas:
            hi = mid
            z_p, val = polished(z_mid)
            d_x, d_u = objective.exact_distances(z_p)
            trace.record(iters, mid, val, d_x, d_u, True)
            if val < best_val:
                best_z, best_val = z_p, val
        else:
            lo = mid
    return best_z, best_val, hi, iters


def _boundary_polish(objective, z, cfg):
    """Pull a feasible point back onto the decision boundary along the ray
    from the factual start.

    The classifier score is affine in z, so the crossing point is closed
    form; the pulled-back point is kept only if it stays feasible and does
    not worsen the exact objective.
    """
    z0 = objective.z0
    delta = z - z0
    s0 = float(objective._score_M @ z0 + objective._score_c)
    s1 = float(objective._score_M @ z + objective._score_c)
    if s1 == s0:
        return z
    tau = objective.classifier.threshold
    if objective.target == 1:
        p_b = min(tau + cfg.margin, 1.0 - 1e-12)
    else:
        p_b = max(tau - cfg.margin, 1e-12)
    s_b = float(np.log(p_b / (1.0 - p_b)))
    rho = (s_b - s0) / (s1 - s0)
    if not 0.0 < rho <= 1.0:
        return z
    best_val = objective.exact_objective(z)
    # approach the boundary from the feasible side in a few ulp-scale nudges
    for backoff in (0.0, 1e-14, 1e-12, 1e-10, 1e-8):
        z_b = z0 + rho * (1.0 + backoff) * delta
        if objective.feasible(objective.x_of_z(z_b), cfg.margin):
            if objective.exact_objective(z_b) <= best_val:
                return z_b
            return z
    return z


def _inner_solve(objective, z, beta, cfg, full_schedule):
    mu_final = cfg.l1_smoothing_mu
    if full_schedule and cfg.mu_stages > 1 and mu_final < 1e-3:
        mus = np.geomspace(1e-3, mu_final, cfg.mu_stages)
    else:
        mus = [mu_final]
    budget = max(1, cfg.max_iters // len(mus))
    used = 0
    for mu in mus:
        z, it = _minimize_smooth(objective, z, beta, mu, cfg, budget)
        used += it
    return z, used


def _minimize_smooth(objective, z, beta, mu, cfg, budget):
    # L-BFGS handles the 1/mu curvature at the smoothed kinks that plain
    # gradient descent cannot; it only ever sees gradients.
    res = minimize(
        lambda v: objective.value_and_grad(v, beta, mu),
        z,
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": budget, "gtol": cfg.tol_grad, "ftol": 1e-16, "maxcor": 20},
    )
    return np.asarray(res.x, dtype=float), int(res.nit) + 1


def _result(objective, z, d_x, d_u, converged, iterations, beta, trace):
    x_cf = objective.x_of_z(z)
    if objective.kind != "intervention":
        # already exact by construction; re-pin for bit-equality with the factual
        frozen = list(objective.scm.frozen_indices)
        x_cf[frozen] = objective.x_factual[frozen]
    return SolveResult(
        z=z, x_cf=x_cf, u_cf=objective.u_of_z(z), d_x=d_x, d_u=d_u,
        converged=converged, iterations=iterations, beta_final=beta, trace=trace,
    )


# ---------------------------------------------------------------------------
# exhaustive verification oracle


def normalized_grid(bounds: tuple[float, float], resolution: float) -> Vector:
    """1-D grid of offsets in scale units, shared by every grid evaluator."""
    lo, hi = bounds
    n_steps = int(np.floor((hi - lo) / resolution + 1e-9)) + 1
    return lo + resolution * np.arange(n_steps)


def grid_candidates(anchor: Vector, sigma: Vector, bounds: tuple[float, float], resolution: float) -> Vector:
    """All grid points ``anchor + sigma * offset`` over a box of normalized
    offsets, flattened in row-major order: shape (n_points, len(anchor))."""
    offsets = normalized_grid(bounds, resolution)
    axes = [anchor[k] + sigma[k] * offsets for k in range(len(anchor))]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def grid_oracle(
    objective: CounterfactualObjective,
    bounds: tuple[float, float],
    resolution: float,
    cfg: SolverConfig | None = None,
) -> tuple[Vector, float]:
    """Brute-force minimizer of the exact constrained objective on a grid.

    Evaluates ``w_x * d_x + lam * d_u`` (no smoothing, no penalty) at every
    grid point of the free coordinates, discards points that do not classify
    as the target, and returns ``(u_cf or z, value)`` at the best survivor.
    Only meant for low-dimensional verification (free dimension <= 3).
    """
    cfg = cfg or SolverConfig()
    if objective.m > 3:
        raise ValueError("grid oracle limited to 3 free coordinates")
    anchor = objective.z_anchor if objective.z_anchor is not None else objective.z0
    sigma = objective.sigma_z if objective.sigma_z is not None else np.ones(objective.m)
    Z = grid_candidates(anchor, sigma, bounds, resolution)
    X = objective.x_of_z_batch(Z)
    labels = objective.classifier.predict(X)
    feas = labels == objective.target
    if cfg.margin > 0:
        p = objective.classifier.predict_proba(X)[:, 1]
        if objective.target == 1:
            feas = p >= objective.classifier.threshold + cfg.margin
        else:
            feas = p <= objective.classifier.threshold - cfg.margin
    if not np.any(feas):
        raise EmptyFeasibleSetError("no grid point satisfies the target-class constraint")

    act = objective.active_x
    d_x = np.sum(np.abs(X[:, act] - objective.x_factual[act]) / objective.sigma_x, axis=1)
    value = objective.w_x * d_x
    if objective.z_anchor is not None:
        d_u = np.sqrt(np.sum(((Z - objective.z_anchor) / objective.sigma_z) ** 2, axis=1))
        value = value + objective.lam * d_u
    value = np.where(feas, value, np.inf)
    k = int(np.argmin(value))
    z_best = Z[k]
    if objective.kind == "latent":
        return objective.u_of_z(z_best), float(value[k])
    return z_best, float(value[k])

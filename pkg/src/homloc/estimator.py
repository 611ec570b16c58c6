"""Maximum-likelihood recovery of (dx, dy, dt) from event batches.

The log-likelihood keeps only the offset-dependent part,
sum_i log(1 + V * upsilon_i * cos(w_i)); the Gaussian envelope is an
additive constant. The cosine terms make the sample likelihood
multimodal, so fitting is two-stage: a coarse grid over the search box
locates the basin, then gradient ascent polishes within it.

The phase enters only through its cosine, so the likelihood is exactly
even: theta and -theta produce identical event distributions and the
overall sign is not identifiable. mle_fit returns the canonical
representative of the {theta_hat, -theta_hat} pair (first nonzero
component positive) whenever the mirrored point also lies in the search
box; an asymmetric box counts as the caller choosing a branch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import ConvergenceError, ValidationError
from .fisher import crb, fi_quadrature
from .model import Offset3D, PolarizationSetting, SourceSpec
from .physics import visibility
from .sampler import EventBatch, sample_batch

_LOG_FLOOR_ARG = 1e-300   # density terms below this are floored, not -inf


@dataclass(frozen=True)
class SearchConfig:
    """Controls for the two-stage likelihood search.

    box: per-axis (lo, hi) search ranges; must contain the maximum.
    grid_points: coarse-grid points per axis before the basin-spacing rule
    (spacing <= pi / (3 * q99 of |momentum|)) refines the count upward.
    coarse_subsample: events used in stage 1 (deterministic prefix);
    stage 2 always uses every event.
    """

    box: tuple = ((-5.0, 5.0), (-5.0, 5.0), (-5.0, 5.0))
    grid_points: int = 41
    coarse_subsample: int = 600
    grad_tol: float = 1e-8
    max_iter: int = 200
    min_events: int = 50
    hessian_step: float = 1e-4
    canonical_sign: bool = True

    def __post_init__(self):
        if len(self.box) != 3 or any(len(b) != 2 or not (b[0] < b[1]) for b in self.box):
            raise ValidationError(f"box must be three (lo, hi) pairs, got {self.box!r}")
        if self.grid_points < 2:
            raise ValidationError("grid_points must be at least 2")
        if self.min_events < 1:
            raise ValidationError("min_events must be positive")


@dataclass(frozen=True)
class MleResult:
    theta_hat: Offset3D
    log_likelihood: float
    observed_information: np.ndarray
    converged: bool
    n_events_used: int
    trace: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ReplicationSummary:
    """Replicated-fit statistics next to the CRB reference.

    estimates has one row per replication (non-converged rows are NaN);
    mean, bias, covariance, and empirical_std are over converged rows only.
    """

    estimates: np.ndarray
    converged: np.ndarray
    mean: np.ndarray
    bias: np.ndarray
    covariance: np.ndarray
    empirical_std: np.ndarray
    crb_std: tuple[float, float, float]
    n_per_rep: int
    r_total: int
    n_excluded: int


def _columns(events):
    """Accept an EventBatch or an iterable of DetectionEvent; return (k, ups)."""
    if isinstance(events, EventBatch):
        k = np.stack([events.dkx, events.dky, events.domega])
        return k, np.asarray(events.upsilon, dtype=float)
    rows = list(events)
    if rows and not all(u in (-1, +1) for u in (e.upsilon for e in rows)):
        raise ValidationError("events carry invalid upsilon tags")
    k = np.array([[e.dkx for e in rows], [e.dky for e in rows],
                  [e.domega for e in rows]], dtype=float)
    return k, np.array([e.upsilon for e in rows], dtype=float)


def log_likelihood(events, theta: Offset3D, p: PolarizationSetting,
                   s: SourceSpec) -> float:
    """Offset-dependent log-likelihood, exactly order-independent.

    Terms hitting the support boundary (1 + V upsilon cos w <= 1e-300,
    possible only at V = 1) are floored at log(1e-300) instead of -inf.
    Summation is exact (math.fsum), so permuting events cannot change the
    value.
    """
    k, ups = _columns(events)
    v = visibility(p).value
    th = np.array(theta.as_tuple(), dtype=float)
    term = 1.0 + v * ups * np.cos(th @ k)
    return math.fsum(np.log(np.maximum(term, _LOG_FLOOR_ARG)))


def _ll_and_grad(th, k, ups, v):
    """Value and analytic gradient; floored terms contribute zero gradient."""
    w = th @ k
    term = 1.0 + v * ups * np.cos(w)
    ok = term > _LOG_FLOOR_ARG
    ll = float(np.sum(np.log(np.where(ok, term, _LOG_FLOOR_ARG))))
    factor = np.where(ok, -v * ups * np.sin(w) / np.where(ok, term, 1.0), 0.0)
    grad = k @ factor
    return ll, grad, int(np.sum(~ok))


def _coarse_grid_best(k, ups, v, axes, halve_by_symmetry):
    """Argmax of the log-likelihood over the tensor grid, blockwise.

    When the box is sign-symmetric the exact evenness of the likelihood
    lets the scan keep only grid points whose first nonzero coordinate is
    nonnegative; the mirrored half carries identical values.
    """
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
    if halve_by_symmetry:
        lead = np.sign(pts[:, 0])
        lead = np.where(lead == 0.0, np.sign(pts[:, 1]), lead)
        lead = np.where(lead == 0.0, np.sign(pts[:, 2]), lead)
        pts = pts[lead >= 0.0]
    scaled = v * ups
    best_val = -math.inf
    best = pts[0]
    block = 4096
    for lo in range(0, len(pts), block):
        chunk = pts[lo:lo + block]
        w = chunk @ k
        np.cos(w, out=w)
        w *= scaled[None, :]
        w += 1.0
        np.maximum(w, _LOG_FLOOR_ARG, out=w)
        np.log(w, out=w)
        vals = w.sum(axis=1)
        j = int(np.argmax(vals))
        if vals[j] > best_val:
            best_val = float(vals[j])
            best = chunk[j]
    return best, best_val


def mle_fit(events, p: PolarizationSetting, s: SourceSpec,
            search: SearchConfig = SearchConfig()) -> MleResult:
    """Two-stage maximum-likelihood fit over the search box.

    Stage 1 evaluates a coarse grid (spacing capped by the basin rule
    pi / (3 * max-axis 0.99-quantile of |momentum|), so the grid cannot
    skip an oscillation of the likelihood) on a deterministic event
    prefix. Stage 2 runs bounded gradient ascent (L-BFGS-B on the negative
    log-likelihood with the analytic gradient) from the best grid point
    over all events. The observed information is the negated Hessian,
    formed by central differences of the analytic gradient.

    converged requires: scaled gradient norm below grad_tol, observed
    information positive semidefinite, and an interior optimum (boundary
    fits are flagged, not trusted).

    The returned theta_hat is the canonical representative of the exactly
    tied pair {theta_hat, -theta_hat} (see the module docstring); set
    canonical_sign=False in SearchConfig to keep the raw optimizer output.
    """
    k, ups = _columns(events)
    n = k.shape[1]
    if n < search.min_events:
        raise ConvergenceError(
            f"fit needs at least {search.min_events} events, got {n}")
    v = visibility(p).value
    if v == 0.0:
        raise ConvergenceError("zero visibility: likelihood is flat, no maximum")

    # basin-spacing rule, one cap from the widest momentum axis
    q99 = float(np.max(np.quantile(np.abs(k), 0.99, axis=1)))
    max_spacing = math.pi / (3.0 * q99) if q99 > 0.0 else math.inf
    symmetric_box = all(lo == -hi for lo, hi in search.box)
    axes = []
    for lo, hi in search.box:
        pts = search.grid_points
        if math.isfinite(max_spacing):
            pts = max(pts, int(math.ceil((hi - lo) / max_spacing)) + 1)
        axis = np.linspace(lo, hi, pts)
        if symmetric_box:
            axis = 0.5 * (axis - axis[::-1])  # exact negation symmetry
        axes.append(axis)

    n_sub = min(n, search.coarse_subsample)
    start, grid_ll = _coarse_grid_best(k[:, :n_sub], ups[:n_sub], v, axes,
                                       halve_by_symmetry=symmetric_box)

    neg = lambda th: tuple(-x for x in _ll_and_grad(th, k, ups, v)[:2])
    gtol_abs = search.grad_tol * n * q99  # gradient is a sum of n O(q99) terms
    res = minimize(neg, start, jac=True, method="L-BFGS-B", bounds=search.box,
                   options={"maxiter": search.max_iter, "ftol": 1e-14,
                            "gtol": 0.1 * gtol_abs})
    th_hat = np.asarray(res.x, dtype=float)

    # quotient the exact theta -> -theta symmetry: canonical sign has the
    # first nonzero component positive, taken only if the mirror image is
    # also inside the box
    sign_flipped = False
    if search.canonical_sign:
        lead = next((x for x in th_hat if x != 0.0), 0.0)
        mirrored = -th_hat
        in_box = all(lo <= mv <= hi for mv, (lo, hi) in zip(mirrored, search.box))
        if lead < 0.0 and in_box:
            th_hat = mirrored
            sign_flipped = True

    ll, grad, n_floored = _ll_and_grad(th_hat, k, ups, v)
    grad_norm_scaled = float(np.linalg.norm(grad)) / max(n * q99, 1e-300)
    grad_ok = grad_norm_scaled < search.grad_tol

    # observed information: central differences of the analytic gradient
    obs = np.empty((3, 3))
    for j in range(3):
        h = search.hessian_step * max(1.0, abs(th_hat[j]))
        tp = th_hat.copy(); tp[j] += h
        tm = th_hat.copy(); tm[j] -= h
        gp = _ll_and_grad(tp, k, ups, v)[1]
        gm = _ll_and_grad(tm, k, ups, v)[1]
        obs[:, j] = -(gp - gm) / (2.0 * h)
    obs = 0.5 * (obs + obs.T)
    eigs = np.linalg.eigvalsh(obs)
    psd_ok = bool(eigs[0] >= -1e-8 * max(1.0, abs(eigs[-1])))

    boundary = any(
        th_hat[j] - lo < 1e-6 * (hi - lo) or hi - th_hat[j] < 1e-6 * (hi - lo)
        for j, (lo, hi) in enumerate(search.box))

    trace = {
        "grid_shape": tuple(len(a) for a in axes),
        "grid_best": tuple(float(x) for x in start),
        "grid_best_ll": grid_ll,
        "coarse_subsample": n_sub,
        "stage2_iterations": int(res.nit),
        "grad_norm_scaled": grad_norm_scaled,
        "n_floored": n_floored,
        "boundary": boundary,
        "psd": psd_ok,
        "sign_flipped": sign_flipped,
    }
    return MleResult(
        theta_hat=Offset3D(dx=float(th_hat[0]), dy=float(th_hat[1]), dt=float(th_hat[2])),
        log_likelihood=ll,
        observed_information=obs,
        converged=bool(grad_ok and psd_ok and not boundary),
        n_events_used=n,
        trace=trace,
    )


def _child_seed(master_seed: int, index: int) -> int:
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(index),))
    return int(ss.generate_state(1, np.uint64)[0])


def _one_replication(child_seed, n_per_rep, theta, p, s, search):
    batch = sample_batch(child_seed, n_per_rep, theta, p, s)
    try:
        fit = mle_fit(batch, p, s, search)
    except ConvergenceError:
        return np.full(3, np.nan), False
    th = np.array(fit.theta_hat.as_tuple())
    return (th, True) if fit.converged else (np.full(3, np.nan), False)


def replicate(seed: int, r: int, n_per_rep: int, theta: Offset3D,
              p: PolarizationSetting, s: SourceSpec,
              search: SearchConfig = SearchConfig(),
              n_jobs: int = 1) -> ReplicationSummary:
    """R independent batch+fit replications against the CRB.

    Child seeds come from spawn_key derivation off the master seed, so the
    summary is deterministic for a fixed master seed regardless of n_jobs.
    Non-converged fits are excluded from the statistics and counted.
    """
    if r < 2:
        raise ValidationError(f"replicate needs r >= 2, got {r!r}")
    if n_per_rep < 1:
        raise ValidationError(f"n_per_rep must be positive, got {n_per_rep!r}")

    seeds = [_child_seed(seed, j) for j in range(r)]
    if n_jobs != 1:
        from joblib import Parallel, delayed
        rows = Parallel(n_jobs=n_jobs)(
            delayed(_one_replication)(cs, n_per_rep, theta, p, s, search)
            for cs in seeds)
    else:
        rows = [_one_replication(cs, n_per_rep, theta, p, s, search)
                for cs in seeds]

    estimates = np.array([row[0] for row in rows])
    ok = np.array([row[1] for row in rows], dtype=bool)
    n_ok = int(np.sum(ok))
    if n_ok < 2:
        raise ConvergenceError(
            f"only {n_ok} of {r} replications converged; no usable statistics")
    good = estimates[ok]
    mean = good.mean(axis=0)
    th = np.array(theta.as_tuple())
    cov = np.cov(good.T, ddof=1)
    reference = crb(fi_quadrature(p, s, theta), n_per_rep)
    return ReplicationSummary(
        estimates=estimates,
        converged=ok,
        mean=mean,
        bias=mean - th,
        covariance=cov,
        empirical_std=np.sqrt(np.diag(cov)),
        crb_std=reference.as_tuple(),
        n_per_rep=int(n_per_rep),
        r_total=int(r),
        n_excluded=int(r - n_ok),
    )

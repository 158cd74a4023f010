"""The implicit Euler step (resolvent) with a flux certificate.

One step solves

    min_u  sum_i h (u_i - g_i)^2 / (2 tau) + sum_e h W(Du_e) - sum_i h f_i u_i

over Dirichlet profiles, ``W`` being the convex primitive of ``L``.  The
certificate is a flux ``sigma`` on the edges that satisfies the discrete
balance ``(u_i - g_i)/tau - (sigma_{i+1/2} - sigma_{i-1/2})/h = f_i`` at
every interior node; optimality is then equivalent to ``sigma`` lying in
``L(Du)`` edge by edge.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import _kernel
from .model import Grid, ModelError, OperatorSpec, Profile


class StepFailure(RuntimeError):
    """The step solver ran out of iterations; carries the best residual."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (best inclusion residual {residual:.3e})")
        self.residual = residual


class MalformedCertificate(ValueError):
    pass


@dataclass(frozen=True)
class StepProblem:
    g: Profile
    f_slice: np.ndarray
    tau: float
    op: OperatorSpec
    grid: Grid

    def __post_init__(self):
        if not (np.isfinite(self.tau) and self.tau > 0):
            raise ModelError("time step tau must be > 0")
        f = np.asarray(self.f_slice, dtype=float)
        if f.shape != (self.grid.n_cells + 1,):
            raise ModelError("f_slice needs one value per grid node")
        if not np.all(np.isfinite(f)):
            raise ModelError("f_slice must be finite")
        if self.g.grid.n_cells != self.grid.n_cells:
            raise ModelError("g lives on a different grid")
        object.__setattr__(self, "f_slice", f)

    def default_tol(self) -> float:
        interior = slice(1, -1)
        scale = np.max(np.abs(self.g.values)) / self.tau + np.max(np.abs(self.f_slice[interior]), initial=0.0)
        return 1e-10 * max(1.0, scale)


@dataclass(frozen=True)
class StepCertificate:
    flux: np.ndarray
    residual: float
    gap_estimate: float
    iterations: int = 0


def objective(p: StepProblem, u) -> float:
    """Discrete step objective at nodal values ``u`` (boundary entries must be 0)."""
    u = np.asarray(u, dtype=float)
    h = p.grid.h
    g = p.g.values
    data = np.sum((u[1:-1] - g[1:-1]) ** 2) * h / (2 * p.tau)
    force = h * np.sum(p.f_slice[1:-1] * u[1:-1])
    return float(data + h * np.sum(p.op.potential(np.diff(u) / h)) - force)


def _balance_defect(u: np.ndarray, flux: np.ndarray, p: StepProblem) -> np.ndarray:
    h = p.grid.h
    lhs = (u[1:-1] - p.g.values[1:-1]) / p.tau - np.diff(flux) / h
    return lhs - p.f_slice[1:-1]


def inclusion_distance(u: np.ndarray, flux: np.ndarray, op: OperatorSpec, h: float) -> np.ndarray:
    """Per-edge distance from ``flux`` to the interval ``L(Du)``."""
    lo, hi = op.interval(np.diff(u) / h)
    return np.maximum(np.maximum(lo - flux, flux - hi), 0.0)


def inclusion_residual(u: Profile, flux, p: StepProblem, balance_tol: float | None = None) -> float:
    """Largest distance from the certificate flux to ``L(Du)``.

    Raises :class:`MalformedCertificate` when the flux does not satisfy the
    discrete balance at the interior nodes.
    """
    flux = np.asarray(flux, dtype=float)
    if flux.shape != (p.grid.n_cells,):
        raise MalformedCertificate("flux needs one value per edge")
    defect = _balance_defect(u.values, flux, p)
    if balance_tol is None:
        scale = 1.0 + np.max(np.abs(u.values - p.g.values)) / p.tau + np.max(np.abs(p.f_slice))
        balance_tol = 1e-9 * scale
    if np.max(np.abs(defect), initial=0.0) > balance_tol:
        raise MalformedCertificate(f"balance violated by {np.max(np.abs(defect)):.3e}")
    return float(np.max(inclusion_distance(u.values, flux, p.op, p.grid.h)))


def implicit_step(p: StepProblem, tol: float | None = None, max_iter: int | None = None):
    """Solve one implicit Euler step; returns ``(Profile, StepCertificate)``."""
    tol = p.default_tol() if tol is None else float(tol)
    if not tol > 0:
        raise ModelError("tol must be > 0")
    return _solve(p.g.values, p.f_slice, p.tau, p.op, p.grid, tol, max_iter, problem=p)


def roundoff_floor(n_cells: int, scale: float) -> float:
    """Smallest inclusion tolerance the certificate can resolve: the flux is a
    running sum over ``n_cells`` edges of terms of size ``scale * h``."""
    return 16.0 * n_cells * np.finfo(float).eps * max(1.0, scale)


def _solve(g, f, tau, op, grid, tol, max_iter=None, problem=None):
    breaks, lcoef, dcoef, wcoef, lr0, quad = _kernel_arrays(op)
    n = grid.n_cells
    if max_iter is None:
        max_iter = 20 * n + 200
    u, flux, status, its = _kernel.solve_step(
        np.ascontiguousarray(g, dtype=float),
        np.ascontiguousarray(f, dtype=float),
        float(tau), grid.h, breaks, lcoef, dcoef, wcoef, lr0, quad, 0.25 * tol, int(max_iter),
    )
    u[0] = u[-1] = 0.0
    resid = float(np.max(inclusion_distance(u, flux, op, grid.h)))
    if status != _kernel.STATUS_OK or resid > tol:
        raise StepFailure(f"implicit step did not converge in {its} iterations", resid)
    prof = Profile(grid, u)
    cert = StepCertificate(flux=flux, residual=resid, gap_estimate=resid * float(np.sum(np.abs(np.diff(u)))), iterations=its)
    return prof, cert


_ARRAY_CACHE: dict = {}


def _kernel_arrays(op: OperatorSpec):
    key = id(op)
    hit = _ARRAY_CACHE.get(key)
    if hit is None or hit[0] is not op:
        hit = (op, op.kernel_arrays())
        _ARRAY_CACHE[key] = hit
    return hit[1]


# ---------------------------------------------------------------------------
# independent oracle


def brute_force_step_oracle(p: StepProblem, resolution: float = 1e-4) -> Profile:
    """Minimise the step objective by lattice search.

    A coarse exhaustive lattice over ``|u_i| <= |g|_inf + tau |f|_inf`` is
    followed by a shrinking pattern search whose moves are all vectors in
    ``{-1, 0, 1}^d`` times the current spacing, so rigid block moves and
    block splits are available at every scale.
    """
    n = p.grid.n_cells
    if n > 8:
        raise ModelError("brute-force oracle is limited to n_cells <= 8")
    if not resolution > 0:
        raise ModelError("resolution must be > 0")
    d = n - 1
    bound = np.max(np.abs(p.g.values)) + p.tau * np.max(np.abs(p.f_slice[1:-1]), initial=0.0)
    bound = max(bound, resolution)

    def batch_objective(U):
        full = np.zeros((U.shape[0], n + 1))
        full[:, 1:-1] = U
        h = p.grid.h
        data = np.sum((U - p.g.values[1:-1]) ** 2, axis=1) * h / (2 * p.tau)
        reg = h * np.sum(p.op.potential(np.diff(full, axis=1) / h), axis=1)
        return data + reg - h * U @ p.f_slice[1:-1]

    k = max(3, int(round((2e4) ** (1.0 / d))))
    axis = np.linspace(-bound, bound, k)
    best, best_val = None, np.inf
    for chunk in _lattice_chunks(axis, d, 50_000):
        vals = batch_objective(chunk)
        j = int(np.argmin(vals))
        if vals[j] < best_val:
            best, best_val = chunk[j].copy(), vals[j]

    moves = np.array(list(itertools.product((-1.0, 0.0, 1.0), repeat=d)))
    step = axis[1] - axis[0]
    while step > 0.05 * resolution:
        cand = best + step * moves
        vals = batch_objective(cand)
        j = int(np.argmin(vals))
        if vals[j] < best_val:
            best, best_val = cand[j].copy(), vals[j]
        else:
            step *= 0.5
    out = np.zeros(n + 1)
    out[1:-1] = best
    return Profile(p.grid, out)


def _lattice_chunks(axis, d, size):
    grids = itertools.product(axis, repeat=d)
    while True:
        chunk = list(itertools.islice(grids, size))
        if not chunk:
            return
        yield np.array(chunk)

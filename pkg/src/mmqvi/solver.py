"""Backward time-stepping of the dynamic programming inequality.

Starting from the terminal surface, every level solves one implicit step by
policy iteration and is checked against the a-priori stability envelope
before stepping further back; the loop includes the n = 0 level so the
policy at t = 0 is available.  An explicit one-step baseline with the same
spatial stencils is provided for cross-checks: it is subject to a CFL
restriction and is expected to blow up when that restriction is violated,
which it signals instead of returning garbage.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import scheme
from .grid import Grid, GridSpec, StencilSet, build_grid, build_stencils
from .model import ModelParams, stability_bounds, terminal_value
from .policy_iteration import PiterConfig, PolicyIterationError, iterate
from .scheme import Policy, apply_caps

log = logging.getLogger(__name__)


class StabilityEnvelopeError(RuntimeError):
    """A computed surface left the a-priori bounds; names level and node."""

    def __init__(self, level: int, node: int, value: float, bounds: tuple[float, float]):
        super().__init__(
            f"value {value:.6g} at node {node}, time level {level} leaves the "
            f"stability envelope [{bounds[0]:.6g}, {bounds[1]:.6g}]"
        )
        self.level = level
        self.node = node
        self.value = value
        self.bounds = bounds


class ExplicitInstabilityError(RuntimeError):
    """The explicit baseline went unstable; carries level and CFL factor."""

    def __init__(self, level: int, reason: str, cfl_factor: float):
        super().__init__(
            f"explicit step unstable at time level {level} ({reason}); "
            f"CFL factor {cfl_factor:.4g}"
        )
        self.level = level
        self.reason = reason
        self.cfl_factor = cfl_factor


@dataclass(frozen=True)
class ValueSurface:
    """Reduced values on the node lattice at one time level."""

    n: int
    t: float
    values: np.ndarray


@dataclass(eq=False)
class Solution:
    """Backward solve output: surfaces for n = 0..N, policies for n = 0..N-1."""

    params: ModelParams
    grid: Grid
    mode: str
    surfaces: list[ValueSurface]
    policies: list[Policy]
    metadata: dict = field(default_factory=dict)

    def value_at(self, n: int, alpha: float, q: int) -> float:
        """Surface value at time level n, linear in alpha between nodes."""
        g = self.grid
        jj = int(q) + g.qs[-1]
        if not 0 <= jj < g.n_q:
            raise ValueError(f"inventory {q} outside [-q_bar, q_bar]")
        pos = (alpha - g.alphas[0]) / g.d_alpha
        i0 = int(np.clip(np.floor(pos), 0, g.n_alpha - 2))
        w = min(max(pos - i0, 0.0), 1.0)
        row = self.surfaces[n].values.reshape(g.n_q, g.n_alpha)[jj]
        return float((1.0 - w) * row[i0] + w * row[i0 + 1])


def terminal_vector(grid: Grid, p: ModelParams) -> np.ndarray:
    g_by_q = np.array([terminal_value(p, float(q)) for q in grid.qs])
    return np.repeat(g_by_q, grid.n_alpha)


def _check_envelope(
    p: ModelParams, grid: Grid, level: int, v: np.ndarray, tol: float
) -> None:
    if not np.isfinite(v).all():
        node = int(np.flatnonzero(~np.isfinite(v))[0])
        raise StabilityEnvelopeError(level, node, float(v[node]), (np.nan, np.nan))
    lo, hi = stability_bounds(p, grid.times[level])
    bad = (v < lo - tol) | (v > hi + tol)
    if bad.any():
        node = int(np.flatnonzero(bad)[0])
        raise StabilityEnvelopeError(level, node, float(v[node]), (lo, hi))


def solve_backward(
    p: ModelParams,
    spec: GridSpec,
    mode: str = "clamp",
    piter: PiterConfig = PiterConfig(),
    envelope_tol: float = 1e-8,
) -> Solution:
    """Solve all time levels backward from the terminal surface."""
    started = time.perf_counter()
    grid = build_grid(p, spec)
    st = build_stencils(grid, p, mode)
    n_levels = spec.n_time_steps

    v = terminal_vector(grid, p)
    _check_envelope(p, grid, n_levels, v, envelope_tol)
    surfaces: list[ValueSurface | None] = [None] * (n_levels + 1)
    surfaces[n_levels] = ValueSurface(n_levels, grid.times[-1], v)
    policies: list[Policy | None] = [None] * n_levels
    per_level = []

    for n in range(n_levels - 1, -1, -1):
        try:
            v, policy, trace = iterate(grid, p, st, v, v, piter)
        except PolicyIterationError as exc:
            raise PolicyIterationError(f"time level {n}: {exc}", exc.trace) from exc
        _check_envelope(p, grid, n, v, envelope_tol)
        surfaces[n] = ValueSurface(n, grid.times[n], v)
        policies[n] = policy
        per_level.append(
            {
                "level": n,
                "iterations": trace.iterations,
                "metric": trace.stop_metrics[-1] if trace.stop_metrics else 0.0,
                "min_increment": min(trace.min_increments, default=0.0),
                "converged_by": trace.converged_by,
            }
        )
        if n % 50 == 0:
            log.debug("level %d done in %d iterations", n, trace.iterations)

    q0_rows = np.array([s.values.reshape(grid.n_q, grid.n_alpha)[grid.qs[-1]]
                        for s in surfaces])
    metadata = {
        "method": "implicit",
        "mode": mode,
        "per_level": per_level[::-1],
        "horizon_monotone_q0": bool(np.all(np.diff(q0_rows, axis=0) <= 1e-9)),
        "wall_time": time.perf_counter() - started,
    }
    return Solution(params=p, grid=grid, mode=mode, surfaces=surfaces,
                    policies=policies, metadata=metadata)


def explicit_cfl_factor(p: ModelParams, grid: Grid) -> float:
    """dt times the largest continuation-row rate; stability needs < 1."""
    return grid.d_t * (
        p.k * p.alpha_cap / grid.d_alpha
        + p.rho**2 / grid.d_alpha**2
        + p.lambda_a
        + p.lambda_b
    )


def _project_impulses(grid: Grid, p: ModelParams, v2d: np.ndarray):
    """Raise values to the impulse obstacle max_z v(q +/- 1) - upsilon.

    Repeated sweeps let impulses chain across inventory levels; at most
    n_q - 1 sweeps are needed.
    """
    d = np.zeros_like(v2d, dtype=bool)
    z = np.ones_like(v2d, dtype=np.int8)
    for _ in range(grid.n_q - 1):
        cand_up = np.full_like(v2d, -np.inf)
        cand_up[:-1] = v2d[1:] - p.upsilon
        cand_dn = np.full_like(v2d, -np.inf)
        cand_dn[1:] = v2d[:-1] - p.upsilon
        best = np.maximum(cand_up, cand_dn)
        improved = best > v2d
        if not improved.any():
            break
        z = np.where(improved, np.where(cand_up >= cand_dn, 1, -1), z).astype(np.int8)
        d |= improved
        v2d = np.where(improved, best, v2d)
    return v2d, d, z


def solve_explicit_baseline(
    p: ModelParams,
    spec: GridSpec,
    mode: str = "clamp",
    envelope_tol: float = 1e-8,
) -> Solution:
    """Explicit one-step scheme with the impulse max as a post-projection.

    Uses the same spatial stencils as the implicit solver.  Raises
    ExplicitInstabilityError as soon as a level leaves the stability
    envelope or stops being finite, which is the expected outcome whenever
    the CFL factor exceeds one.
    """
    started = time.perf_counter()
    grid = build_grid(p, spec)
    st = build_stencils(grid, p, mode)
    cfl = explicit_cfl_factor(p, grid)
    n_levels = spec.n_time_steps

    v = terminal_vector(grid, p)
    surfaces: list[ValueSurface | None] = [None] * (n_levels + 1)
    surfaces[n_levels] = ValueSurface(n_levels, grid.times[-1], v)
    policies: list[Policy | None] = [None] * n_levels

    for n in range(n_levels - 1, -1, -1):
        cont, la, lb, _, _ = scheme._branches(grid, p, st, v, v)
        v2d = v.reshape(grid.n_q, grid.n_alpha) + grid.d_t * cont
        v2d, d, z = _project_impulses(grid, p, v2d)
        v = v2d.ravel()
        if not np.isfinite(v).all():
            raise ExplicitInstabilityError(n, "non-finite values", cfl)
        lo, hi = stability_bounds(p, grid.times[n])
        if v.min() < lo - envelope_tol or v.max() > hi + envelope_tol:
            raise ExplicitInstabilityError(n, "stability envelope violated", cfl)
        surfaces[n] = ValueSurface(n, grid.times[n], v)
        policies[n] = apply_caps(
            grid, la.ravel(), lb.ravel(), z.ravel(), d.ravel()
        )

    metadata = {
        "method": "explicit",
        "mode": mode,
        "cfl_factor": cfl,
        "wall_time": time.perf_counter() - started,
    }
    return Solution(params=p, grid=grid, mode=mode, surfaces=surfaces,
                    policies=policies, metadata=metadata)


@dataclass(eq=False)
class RefinementResult:
    """Probe values across grid refinements and their successive differences."""

    specs: list[GridSpec]
    probes: list[tuple[float, int]]
    values: np.ndarray            # (n_grids, n_probes)
    diffs: np.ndarray             # (n_grids - 1, n_probes)

    @property
    def max_diffs(self) -> np.ndarray:
        return self.diffs.max(axis=1)


def refine_spec(spec: GridSpec) -> GridSpec:
    """Halve both steps: double the time steps, halve the alpha spacing."""
    return GridSpec(
        n_time_steps=2 * spec.n_time_steps,
        n_alpha_points=2 * spec.n_alpha_points - 1,
        alpha_cap=spec.alpha_cap,
        q_bar=spec.q_bar,
    )


def refinement_table(
    p: ModelParams,
    base_spec: GridSpec,
    probe_alphas,
    probe_qs,
    rounds: int = 3,
    mode: str = "clamp",
    piter: PiterConfig = PiterConfig(),
) -> RefinementResult:
    """Solve on ``rounds + 1`` nested grids and tabulate t = 0 probe values.

    Probe alphas must be nodes of the base grid (they then stay nodes on
    every refinement); probe inventories are exact.
    """
    specs = [base_spec]
    for _ in range(rounds):
        specs.append(refine_spec(specs[-1]))
    probes = [(float(a), int(q)) for q in probe_qs for a in probe_alphas]

    base_grid = build_grid(p, base_spec)
    for a, _ in probes:
        i = base_grid.nearest_alpha_index(a)
        if abs(base_grid.alphas[i] - a) > 1e-9 * max(1.0, abs(a)):
            raise ValueError(f"probe alpha {a} is not a node of the base grid")

    values = np.empty((len(specs), len(probes)))
    for r, s in enumerate(specs):
        sol = solve_backward(p, s, mode=mode, piter=piter)
        g = sol.grid
        v0 = sol.surfaces[0].values.reshape(g.n_q, g.n_alpha)
        for c, (a, q) in enumerate(probes):
            values[r, c] = v0[q + g.qs[-1], g.nearest_alpha_index(a)]
        log.debug("refinement round %d (N=%d, n_alpha=%d) done", r,
                  s.n_time_steps, s.n_alpha_points)

    diffs = np.abs(np.diff(values, axis=0))
    return RefinementResult(specs=specs, probes=probes, values=values, diffs=diffs)

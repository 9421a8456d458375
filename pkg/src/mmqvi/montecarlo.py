"""Monte Carlo validation of the solved control against path simulation.

Paths follow the full model: the signal follows exact Ornstein-Uhlenbeck
transitions between events (truncated to the solver band), external market
orders arrive as Poisson streams and bump the signal, the midprice moves by
one tick at jump times with intensities theta + alpha^+ / theta + alpha^-,
and the maker's quotes and impulses replay the solved policy (nearest
neighbor in alpha, exact in inventory, left-continuous in time).

Price-jump arrivals between events are drawn by inverting the cumulative
intensity along the deterministic signal decay from the last event; the
diffusion part of the signal re-enters at every event time through the exact
transition.  External order streams are simulated exactly.  The realized
objective of a path is

    J = -phi * int_0^T Q^2 dt + X_T + Q_T * (S_T - upsilon * sign(Q_T)) - psi * Q_T^2

whose mean over paths must agree with the reconstructed full value at the
starting state within Monte Carlo error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import ModelParams, reconstruct_full_value
from .solver import Solution


class SimulationError(RuntimeError):
    pass


@dataclass(eq=False)
class PathRecord:
    """Event-ordered trajectory and event log of one simulated path."""

    y0: tuple[float, float, float, int]
    trajectory: list[tuple[float, float, float, float, int]] = field(default_factory=list)
    fill_cash: list[tuple[float, float]] = field(default_factory=list)
    own_order_cash: list[tuple[float, int, float]] = field(default_factory=list)
    ext_buy_times: list[float] = field(default_factory=list)
    ext_sell_times: list[float] = field(default_factory=list)
    jump_up_times: list[float] = field(default_factory=list)
    jump_down_times: list[float] = field(default_factory=list)
    running_penalty: float = 0.0
    chatter_capped: int = 0
    realized_objective: float = 0.0


@dataclass(frozen=True)
class EstimateReport:
    """Sample mean of the path objective versus the model-predicted value."""

    n_paths: int
    mean: float
    stderr: float
    predicted: float
    zscore: float


def _next_jump(theta: float, c: float, k: float, budget: float, window: float):
    """First arrival time of an intensity theta + c*k*exp(-k*t) clock.

    ``c`` is alpha0/k for the matching-sign stream (0 otherwise), ``budget``
    an Exp(1) draw.  Returns the arrival time within ``window`` or None.
    Cumulative intensity: Lambda(w) = theta*w + c*(1 - exp(-k*w)).
    """
    total = theta * window + c * (1.0 - math.exp(-k * window))
    if budget > total:
        return None
    if c == 0.0:
        return budget / theta
    w = budget / theta if theta > 0 else window
    w = min(w, window)
    for _ in range(60):
        ekw = math.exp(-k * w)
        f = theta * w + c * (1.0 - ekw) - budget
        if abs(f) < 1e-14 * (1.0 + budget):
            break
        w -= f / (theta + c * k * ekw)
        if w < 0.0:
            w = 0.0
    return w


def _simulate(
    p: ModelParams,
    sol: Solution,
    y0: tuple[float, float, float, int],
    rng: np.random.Generator,
    collect: bool,
    null_policy: bool,
) -> PathRecord:
    grid = sol.grid
    n_alpha, q_bar = grid.n_alpha, int(grid.qs[-1])
    alpha_lo = grid.alphas[0]
    d_alpha = grid.d_alpha
    a_cap = p.alpha_cap
    k, rho, theta = p.k, p.rho, p.theta
    ups = p.upsilon
    times = grid.times
    n_steps = len(sol.policies)

    if null_policy:
        zeros = np.zeros(grid.n_nodes, dtype=np.int8)
        la_lv = lb_lv = d_lv = [zeros] * n_steps
        z_lv = [zeros] * n_steps
    else:
        la_lv = [pol.la for pol in sol.policies]
        lb_lv = [pol.lb for pol in sol.policies]
        z_lv = [pol.z for pol in sol.policies]
        d_lv = [pol.d for pol in sol.policies]

    x, s, alpha, q = float(y0[0]), float(y0[1]), float(y0[2]), int(y0[3])
    if abs(q) > q_bar:
        raise SimulationError(f"initial inventory {q} outside the cap {q_bar}")
    alpha = min(max(alpha, -a_cap), a_cap)

    rec = PathRecord(y0=(x, s, alpha, q))
    if collect:
        rec.trajectory.append((0.0, x, s, alpha, q))

    q2_int = 0.0       # running integral of Q^2 dt
    t_mark = 0.0       # time of the last inventory change

    def node_of() -> int:
        i = int((alpha - alpha_lo) / d_alpha + 0.5)
        if i < 0:
            i = 0
        elif i >= n_alpha:
            i = n_alpha - 1
        return (q + q_bar) * n_alpha + i

    def mark_q_change(t: float) -> None:
        nonlocal q2_int, t_mark
        q2_int += q * q * (t - t_mark)
        t_mark = t

    def cascade(n: int, t: float) -> None:
        """Execute own market orders while the cell demands one (d = 1)."""
        nonlocal x, alpha, q
        d_arr, z_arr = d_lv[n], z_lv[n]
        for _ in range(2 * q_bar):
            if not d_arr[node_of()]:
                return
            z = int(z_arr[node_of()])
            mark_q_change(t)
            if z > 0:
                x -= s + ups
                q += 1
                alpha = min(alpha + p.gamma_a, a_cap)
                if collect:
                    rec.own_order_cash.append((t, 1, -(s + ups)))
            else:
                x += s - ups
                q -= 1
                alpha = max(alpha - p.gamma_b, -a_cap)
                if collect:
                    rec.own_order_cash.append((t, -1, s - ups))
            if abs(q) > q_bar:
                raise SimulationError(f"inventory {q} breached the cap at t={t}")
            if collect:
                rec.trajectory.append((t, x, s, alpha, q))
        if d_arr[node_of()]:
            rec.chatter_capped += 1

    def advance_alpha(w: float) -> None:
        nonlocal alpha
        if w <= 0.0:
            return
        decay = math.exp(-k * w)
        sd = math.sqrt(rho * rho * (1.0 - decay * decay) / (2.0 * k))
        alpha = alpha * decay + sd * rng.standard_normal()
        if alpha > a_cap:
            alpha = a_cap
        elif alpha < -a_cap:
            alpha = -a_cap

    dt = grid.d_t
    counts_a = rng.poisson(p.lambda_a * dt, n_steps)
    counts_b = rng.poisson(p.lambda_b * dt, n_steps)

    for n in range(n_steps):
        t0, t1 = times[n], times[n + 1]
        cascade(n, t0)

        events = [(t0 + dt * u, 1) for u in rng.random(counts_a[n])]
        events += [(t0 + dt * u, -1) for u in rng.random(counts_b[n])]
        events.sort()
        events.append((t1, 0))

        t_cur = t0
        la_arr, lb_arr = la_lv[n], lb_lv[n]
        for t_ev, kind in events:
            # price jumps strictly inside (t_cur, t_ev)
            while t_ev > t_cur:
                window = t_ev - t_cur
                c_up = alpha / k if alpha > 0 else 0.0
                c_dn = -alpha / k if alpha < 0 else 0.0
                w_up = _next_jump(theta, c_up, k, rng.exponential(), window)
                w_dn = _next_jump(theta, c_dn, k, rng.exponential(), window)
                if w_up is None and w_dn is None:
                    advance_alpha(window)
                    t_cur = t_ev
                    break
                if w_dn is None or (w_up is not None and w_up <= w_dn):
                    w, tick = w_up, 1
                else:
                    w, tick = w_dn, -1
                advance_alpha(w)
                t_cur += w
                s += tick * p.sigma
                if collect:
                    (rec.jump_up_times if tick > 0 else rec.jump_down_times).append(t_cur)
                    rec.trajectory.append((t_cur, x, s, alpha, q))

            if kind == 0:
                break
            if kind > 0:
                # external buy: our resting ask fills first, then the bump
                if collect:
                    rec.ext_buy_times.append(t_ev)
                if la_arr[node_of()]:
                    mark_q_change(t_ev)
                    x += s + p.delta
                    q -= 1
                    if collect:
                        rec.fill_cash.append((t_ev, s + p.delta))
                alpha = min(alpha + p.gamma_a, a_cap)
            else:
                if collect:
                    rec.ext_sell_times.append(t_ev)
                if lb_arr[node_of()]:
                    mark_q_change(t_ev)
                    x -= s - p.delta
                    q += 1
                    if collect:
                        rec.fill_cash.append((t_ev, -(s - p.delta)))
                alpha = max(alpha - p.gamma_b, -a_cap)
            if abs(q) > q_bar:
                raise SimulationError(f"inventory {q} breached the cap at t={t_ev}")
            if collect:
                rec.trajectory.append((t_ev, x, s, alpha, q))
            cascade(n, t_ev)

    t_end = float(times[-1])
    q2_int += q * q * (t_end - t_mark)
    rec.running_penalty = p.phi * q2_int
    sign = 0.0 if q == 0 else math.copysign(1.0, q)
    rec.realized_objective = (
        -p.phi * q2_int + x + q * (s - ups * sign) - p.psi * q * q
    )
    if collect:
        rec.trajectory.append((t_end, x, s, alpha, q))
    return rec


def simulate_path(
    p: ModelParams,
    sol: Solution,
    y0: tuple[float, float, float, int],
    seed,
) -> PathRecord:
    """Simulate one path replaying the solved policy; full event record."""
    rng = np.random.default_rng(seed)
    return _simulate(p, sol, y0, rng, collect=True, null_policy=False)


def estimate_performance(
    p: ModelParams,
    sol: Solution,
    y0: tuple[float, float, float, int],
    n_paths: int,
    seed,
    null_policy: bool = False,
) -> EstimateReport:
    """Mean realized objective over paths versus the reconstructed value.

    Per-path generators are spawned deterministically from the master seed,
    so results are reproducible and independent of path count ordering.
    """
    if n_paths < 1:
        raise ValueError(f"n_paths must be >= 1, got {n_paths}")
    children = np.random.SeedSequence(seed).spawn(n_paths)
    objectives = np.empty(n_paths)
    for i, child in enumerate(children):
        rng = np.random.default_rng(child)
        objectives[i] = _simulate(
            p, sol, y0, rng, collect=False, null_policy=null_policy
        ).realized_objective

    mean = float(objectives.mean())
    stderr = float(objectives.std(ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else 0.0
    x0, s0, alpha0, q0 = y0
    alpha0 = min(max(float(alpha0), -p.alpha_cap), p.alpha_cap)
    predicted = reconstruct_full_value(
        float(x0), float(s0), float(q0), sol.value_at(0, alpha0, int(q0))
    )
    if stderr > 0:
        zscore = (mean - predicted) / stderr
    else:
        zscore = 0.0 if abs(mean - predicted) <= 1e-12 * (1.0 + abs(predicted)) else math.inf
    return EstimateReport(
        n_paths=n_paths, mean=mean, stderr=stderr, predicted=predicted, zscore=zscore
    )

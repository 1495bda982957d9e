"""Closed-loop integration and verification of the tracking guarantee.

The coupled agent/target system is integrated with fixed-step classical
RK4; at every grid point the log records the harmonic extension of the
current target configuration, the tracking error against it, the
disagreement, controls, and the exponential-convergence envelope.  The
envelope quantities (forcing level, contraction margin, confinement radii)
follow the Lyapunov analysis of the disagreement controller and are checked
pointwise against the realized trajectory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .controller import ControllerGains
from .dynamics import AgentModel, EffectivenessRankError, TargetModel, pseudoinverse
from .harmonic import TrackingProblem, harmonic_extension, offset_load
from .sheaf import Edge, sheaf_laplacian

ULTIMATE_ATOL = 1e-6


class SimulationDivergedError(RuntimeError):
    """The integrated state stopped being finite."""

    def __init__(self, step: int, time: float):
        super().__init__(f"state became non-finite at step {step} (t={time:.6g})")
        self.step = step
        self.time = time


@dataclass
class Scenario:
    """Everything needed to integrate one closed-loop run.

    ``rho0``/``rho1`` declare the affine envelope ``rho(s) = rho0 + rho1*s``
    bounding the agent-drift variation ``||f(q*) - f(q)|| <= rho(||e||)||e||``;
    ``lambda_v`` is the requested exponential rate.  ``edge_offsets`` holds
    commanded per-edge shifts (formation geometry); ``target_coupling`` adds
    an interaction term to the stacked target drift.  The optional batched
    drift hooks must agree with stacking the per-model drifts and exist only
    to speed up the inner loop.
    """

    problem: TrackingProblem
    agent_models: tuple[AgentModel, ...]
    target_models: tuple[TargetModel, ...]
    gains: ControllerGains
    lambda_v: float
    rho0: float
    rho1: float
    initial_agents: np.ndarray
    initial_targets: np.ndarray
    step: float
    horizon: float
    t0: float = 0.0
    edge_offsets: Mapping[Edge, np.ndarray] | None = None
    target_coupling: Callable[[np.ndarray, float], np.ndarray] | None = None
    batched_agent_drift: Callable[[np.ndarray, float], np.ndarray] | None = None
    batched_target_drift: Callable[[np.ndarray, float], np.ndarray] | None = None
    drift_mismatch_bound: float | None = None
    mismatch_samples: int = 2000
    target_sample_lo: np.ndarray | None = None
    target_sample_hi: np.ndarray | None = None
    seed: int = 0
    formation_scale: float | None = None
    name: str = ""

    def __post_init__(self):
        prob = self.problem
        self.agent_models = tuple(self.agent_models)
        self.target_models = tuple(self.target_models)
        if len(self.agent_models) != prob.agent_count:
            raise ValueError("one agent model per agent vertex required")
        if len(self.target_models) != prob.target_count:
            raise ValueError("one target model per target vertex required")
        for k, m in enumerate(self.agent_models):
            if m.state_dim != prob.agent_dims[k]:
                raise ValueError(
                    f"agent model {k} has state dim {m.state_dim}, stalk wants {prob.agent_dims[k]}"
                )
        for k, m in enumerate(self.target_models):
            if m.state_dim != prob.target_dims[k]:
                raise ValueError(
                    f"target model {k} has state dim {m.state_dim}, stalk wants {prob.target_dims[k]}"
                )
        self.initial_agents = np.asarray(self.initial_agents, dtype=float).ravel()
        self.initial_targets = np.asarray(self.initial_targets, dtype=float).ravel()
        if self.initial_agents.shape != (prob.agent_dim,):
            raise ValueError("initial agent stack has the wrong dimension")
        if self.initial_targets.shape != (prob.target_dim,):
            raise ValueError("initial target stack has the wrong dimension")
        if self.step <= 0 or self.horizon <= 0:
            raise ValueError("step and horizon must be positive")
        if self.lambda_v <= 0:
            raise ValueError("lambda_v must be positive")
        if self.rho0 < 0 or self.rho1 < 0:
            raise ValueError("rho0 and rho1 must be nonnegative")

    @property
    def control_dims(self) -> tuple[int, ...]:
        return tuple(m.control_dim for m in self.agent_models)

    def offset_load_vector(self) -> np.ndarray:
        return offset_load(self.problem, self.edge_offsets)

    # Ensemble drift/disturbance views used by the integrator and the
    # error-dynamics checks.

    def agent_drift(self, q: np.ndarray, t: float) -> np.ndarray:
        if self.batched_agent_drift is not None:
            return self.batched_agent_drift(q, t)
        out = np.empty_like(q)
        for k, m in enumerate(self.agent_models):
            sl = self.problem.agent_slice(k)
            out[sl] = m.drift(q[sl], t)
        return out

    def target_drift(self, p: np.ndarray, t: float) -> np.ndarray:
        if self.batched_target_drift is not None:
            out = self.batched_target_drift(p, t).copy()
        else:
            out = np.empty_like(p)
            for k, m in enumerate(self.target_models):
                sl = self.problem.target_slice(k)
                out[sl] = m.drift(p[sl], t)
        if self.target_coupling is not None:
            out += self.target_coupling(p, t)
        return out

    def agent_disturbance(self, t: float) -> np.ndarray:
        out = np.zeros(self.problem.agent_dim)
        for k, m in enumerate(self.agent_models):
            if m.disturbance_bound > 0.0:
                out[self.problem.agent_slice(k)] = m.disturbance(t)
        return out

    def target_disturbance(self, t: float) -> np.ndarray:
        out = np.zeros(self.problem.target_dim)
        for k, m in enumerate(self.target_models):
            if m.disturbance_bound > 0.0:
                out[self.problem.target_slice(k)] = m.disturbance(t)
        return out


@dataclass
class TrajectoryLog:
    """Time-indexed record of one integration run."""

    times: np.ndarray
    agent_states: np.ndarray      # q, (T, agent_dim)
    target_states: np.ndarray     # p, (T, target_dim)
    extension: np.ndarray         # q*, (T, agent_dim)
    error: np.ndarray             # e = q* - q
    disagreement: np.ndarray      # eta
    control: np.ndarray           # stacked u, (T, sum of control dims)
    error_norm: np.ndarray
    bound: np.ndarray
    energy: np.ndarray            # Dirichlet energy of the stacked state
    agent_ids: tuple[int, ...]
    target_ids: tuple[int, ...]
    agent_dims: tuple[int, ...]
    target_dims: tuple[int, ...]
    control_dims: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.times)


@dataclass(frozen=True)
class BoundQuantities:
    """Scalars entering the exponential-convergence envelope."""

    k1: float
    lambda_v: float
    rho0: float
    rho1: float
    lambda_min: float             # smallest eigenvalue of H
    sigma_max_coupling: float     # largest singular value of B
    f_bar: float                  # bound on the drift mismatch through the extension
    omega_bar: float              # ensemble disturbance bound
    mu: float                     # forcing level (f_bar + omega_bar)^2 / (2 k1 lambda_min)
    k_min: float                  # contraction margin k1 * lambda_min / 2
    chi: float                    # confinement radius (may be inf when rho1 = 0)
    radius_ultimate: float        # sqrt(mu / lambda_v)
    radius_initial: float         # chi - radius_ultimate
    gain_condition: bool
    mismatch_samples: int         # 0 when f_bar was declared, not estimated

    def envelope(self, e0_norm: float, elapsed: float) -> float:
        decay = math.exp(-2.0 * self.lambda_v * max(elapsed, 0.0))
        return math.sqrt(decay * e0_norm**2 + (self.mu / self.lambda_v) * (1.0 - decay))


def compute_bound_quantities(scenario: Scenario) -> BoundQuantities:
    """Evaluate the envelope scalars for a feasible scenario.

    The drift-mismatch bound is taken from the scenario when declared and
    otherwise estimated by sampling target configurations over the
    scenario's sample box (seeded, so runs are reproducible).
    """
    prob = scenario.problem
    lam_min = prob.smallest_interaction_eigenvalue
    if not prob.feasible:
        raise ValueError("bound quantities are undefined for an infeasible problem")
    sigma_b = prob.largest_coupling_singular_value
    k1 = scenario.gains.k1

    bounds = [m.disturbance_bound for m in scenario.agent_models]
    bounds += [m.disturbance_bound for m in scenario.target_models]
    biggest = max(bounds) if bounds else 0.0
    count = max(prob.agent_count, prob.target_count)
    omega_bar = (1.0 + sigma_b / lam_min) * math.sqrt(count) * biggest

    samples = 0
    if scenario.drift_mismatch_bound is not None:
        f_bar = float(scenario.drift_mismatch_bound)
    else:
        f_bar, samples = _estimate_drift_mismatch(scenario)

    mu = (f_bar + omega_bar) ** 2 / (2.0 * k1 * lam_min)
    k_min = 0.5 * k1 * lam_min
    headroom = k_min - scenario.lambda_v - scenario.rho0
    if scenario.rho1 > 0.0:
        chi = headroom / scenario.rho1 if headroom > 0.0 else 0.0
    else:
        chi = math.inf if headroom > 0.0 else 0.0
    radius_u = math.sqrt(mu / scenario.lambda_v)
    gain_ok = k_min > (scenario.rho0 + scenario.rho1 * 2.0 * radius_u) + scenario.lambda_v
    return BoundQuantities(
        k1=k1,
        lambda_v=scenario.lambda_v,
        rho0=scenario.rho0,
        rho1=scenario.rho1,
        lambda_min=lam_min,
        sigma_max_coupling=sigma_b,
        f_bar=f_bar,
        omega_bar=omega_bar,
        mu=mu,
        k_min=k_min,
        chi=chi,
        radius_ultimate=radius_u,
        radius_initial=chi - radius_u if math.isfinite(chi) else math.inf,
        gain_condition=gain_ok,
        mismatch_samples=samples,
    )


def _estimate_drift_mismatch(scenario: Scenario) -> tuple[float, int]:
    """Sampled sup of the extension/drift commutation defect.

    Compares transporting target velocities through the extension against
    the agent drift evaluated at the extended configuration.
    """
    prob = scenario.problem
    rng = np.random.default_rng(scenario.seed)
    lo = scenario.target_sample_lo
    hi = scenario.target_sample_hi
    if lo is None or hi is None:
        lo = scenario.initial_targets - 10.0
        hi = scenario.initial_targets + 10.0
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (prob.target_dim,))
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (prob.target_dim,))
    load = scenario.offset_load_vector()
    n = max(int(scenario.mismatch_samples), 1)
    times = rng.uniform(scenario.t0, scenario.t0 + scenario.horizon, size=n)
    worst = 0.0
    for t in times:
        p = rng.uniform(lo, hi)
        q_star = prob.solve(prob.coupling @ p + load)
        carried = prob.solve(prob.coupling @ scenario.target_drift(p, t))
        mismatch = carried - scenario.agent_drift(q_star, t)
        worst = max(worst, float(np.linalg.norm(mismatch)))
    return worst, n


def theorem_bound(
    scenario: Scenario,
    e0_norm: float,
    t: float,
    quantities: BoundQuantities | None = None,
) -> float:
    """Tracking-error envelope at time ``t`` for an initial error norm."""
    if quantities is None:
        quantities = compute_bound_quantities(scenario)
    return quantities.envelope(e0_norm, t - scenario.t0)


def _control_pipeline(scenario: Scenario):
    """Build the per-evaluation control map, exploiting constant gains."""
    prob = scenario.problem
    k1 = scenario.gains.k1
    models = scenario.agent_models
    if all(m.effectiveness_matrix is not None for m in models):
        g_blocks = [m.effectiveness_matrix for m in models]
        gp_blocks = [m.effectiveness_pinv for m in models]
        gmat = np.zeros((prob.agent_dim, sum(scenario.control_dims)))
        gpmat = np.zeros((sum(scenario.control_dims), prob.agent_dim))
        off = 0
        for k, (g, gp) in enumerate(zip(g_blocks, gp_blocks)):
            sl = prob.agent_slice(k)
            gmat[sl, off:off + g.shape[1]] = g
            gpmat[off:off + g.shape[1], sl] = gp
            off += g.shape[1]

        def control(q: np.ndarray, t: float, eta: np.ndarray):
            u = -k1 * (gpmat @ eta)
            return u, gmat @ u

        return control

    def control(q: np.ndarray, t: float, eta: np.ndarray):
        parts = []
        actuation = np.empty(prob.agent_dim)
        for k, m in enumerate(models):
            sl = prob.agent_slice(k)
            g = m.effectiveness_at(q[sl], t)
            gp = m.effectiveness_pinv if m.effectiveness_matrix is not None else pseudoinverse(g)
            u_k = -k1 * (gp @ eta[sl])
            parts.append(u_k)
            actuation[sl] = g @ u_k
        return np.concatenate(parts), actuation

    return control


def integrate(scenario: Scenario, quantities: BoundQuantities | None = None) -> TrajectoryLog:
    """Fixed-step RK4 integration of the closed loop.

    Deterministic given the scenario; raises
    :class:`~sheaftrack.dynamics.EffectivenessRankError` on a rank failure
    and :class:`SimulationDivergedError` on blow-up.
    """
    prob = scenario.problem
    if quantities is None:
        quantities = compute_bound_quantities(scenario)
    h = scenario.step
    n_steps = max(int(round(scenario.horizon / h)), 1)
    times = scenario.t0 + h * np.arange(n_steps + 1)

    load = scenario.offset_load_vector()
    interaction = prob.interaction
    coupling = prob.coupling
    laplacian = np.asarray(sheaf_laplacian(prob.sheaf, sparse=False))
    control = _control_pipeline(scenario)

    def rates(t: float, q: np.ndarray, p: np.ndarray):
        eta = interaction @ q - (coupling @ p + load)
        u, actuation = control(q, t, eta)
        qdot = scenario.agent_drift(q, t) + actuation + scenario.agent_disturbance(t)
        pdot = scenario.target_drift(p, t) + scenario.target_disturbance(t)
        return qdot, pdot, u, eta

    nq, npd = prob.agent_dim, prob.target_dim
    nu = sum(scenario.control_dims)
    rows = n_steps + 1
    log = TrajectoryLog(
        times=times,
        agent_states=np.empty((rows, nq)),
        target_states=np.empty((rows, npd)),
        extension=np.empty((rows, nq)),
        error=np.empty((rows, nq)),
        disagreement=np.empty((rows, nq)),
        control=np.empty((rows, nu)),
        error_norm=np.empty(rows),
        bound=np.empty(rows),
        energy=np.empty(rows),
        agent_ids=prob.agents,
        target_ids=prob.targets,
        agent_dims=prob.agent_dims,
        target_dims=prob.target_dims,
        control_dims=scenario.control_dims,
    )

    q = scenario.initial_agents.copy()
    p = scenario.initial_targets.copy()
    e0_norm = float(np.linalg.norm(prob.solve(coupling @ p + load) - q))

    def record(k: int, t: float, q, p, u, eta):
        q_star = prob.solve(coupling @ p + load)
        err = q_star - q
        full = prob.stack_full(q, p)
        log.agent_states[k] = q
        log.target_states[k] = p
        log.extension[k] = q_star
        log.error[k] = err
        log.disagreement[k] = eta
        log.control[k] = u
        log.error_norm[k] = np.linalg.norm(err)
        log.bound[k] = quantities.envelope(e0_norm, t - scenario.t0)
        log.energy[k] = 0.5 * float(full @ (laplacian @ full))

    half = 0.5 * h
    sixth = h / 6.0
    for k in range(n_steps):
        t = times[k]
        d1q, d1p, u, eta = rates(t, q, p)
        record(k, t, q, p, u, eta)
        d2q, d2p, _, _ = rates(t + half, q + half * d1q, p + half * d1p)
        d3q, d3p, _, _ = rates(t + half, q + half * d2q, p + half * d2p)
        d4q, d4p, _, _ = rates(t + h, q + h * d3q, p + h * d3p)
        q = q + sixth * (d1q + 2.0 * d2q + 2.0 * d3q + d4q)
        p = p + sixth * (d1p + 2.0 * d2p + 2.0 * d3p + d4p)
        if not (np.isfinite(q).all() and np.isfinite(p).all()):
            raise SimulationDivergedError(k + 1, float(times[k + 1]))
    _, _, u, eta = rates(times[-1], q, p)
    record(n_steps, times[-1], q, p, u, eta)
    return log


def error_dynamics_residual(scenario: Scenario, log: TrajectoryLog) -> float:
    """Max defect between finite-difference error rates and the closed-loop
    error field ``-k1 H e + f_B + f_tilde + Delta`` at interior grid points.

    Small residuals (second order in the step) certify that the integrated
    system realizes the analyzed error dynamics.
    """
    if len(log) < 3:
        raise ValueError("need at least three grid points")
    prob = scenario.problem
    k1 = scenario.gains.k1
    h = float(log.times[1] - log.times[0])
    worst = 0.0
    for k in range(1, len(log) - 1):
        t = float(log.times[k])
        q = log.agent_states[k]
        p = log.target_states[k]
        q_star = log.extension[k]
        e = log.error[k]
        e_dot_fd = (log.error[k + 1] - log.error[k - 1]) / (2.0 * h)
        carried_drift = prob.solve(prob.coupling @ scenario.target_drift(p, t))
        mismatch = carried_drift - scenario.agent_drift(q_star, t)
        variation = scenario.agent_drift(q_star, t) - scenario.agent_drift(q, t)
        disturbance_gap = prob.solve(prob.coupling @ scenario.target_disturbance(t)) - scenario.agent_disturbance(t)
        rhs = -k1 * (prob.interaction @ e) + mismatch + variation + disturbance_gap
        worst = max(worst, float(np.linalg.norm(e_dot_fd - rhs)))
    return worst


@dataclass
class BoundReport:
    """Outcome of checking a trajectory against the guarantee."""

    quantities: BoundQuantities
    e0_norm: float
    e0_in_initial_set: bool
    applicable: bool                       # gain condition and admissible start
    violations: list[tuple[float, float, float]]  # (t, error norm, envelope)
    trajectory_in_domain: bool
    ultimate_entry_time: float | None
    ultimately_bounded: bool | None        # None when the horizon is too short
    radii_ordered: bool
    terminal_error: float

    @property
    def violation_count(self) -> int:
        return len(self.violations)


def verify_bound(log: TrajectoryLog, quantities: BoundQuantities, t0: float | None = None) -> BoundReport:
    """Pointwise check of the error norm against the envelope and the sets.

    Never raises on a violation; everything is reported.  When the start
    lies outside the admissible initial set the guarantee is inapplicable
    and violations are still listed for information.
    """
    t_start = float(log.times[0]) if t0 is None else t0
    e0 = float(log.error_norm[0])
    in_s = e0 <= quantities.radius_initial
    applicable = bool(in_s and quantities.gain_condition)

    violations = []
    for k in range(len(log)):
        envelope = quantities.envelope(e0, float(log.times[k]) - t_start)
        if log.error_norm[k] > envelope + 1e-12:
            violations.append((float(log.times[k]), float(log.error_norm[k]), envelope))

    in_domain = bool(np.all(log.error_norm <= quantities.chi))
    radius_u = quantities.radius_ultimate

    inside = log.error_norm <= radius_u + ULTIMATE_ATOL
    entry_time = None
    if inside[-1]:
        k = len(inside) - 1
        while k > 0 and inside[k - 1]:
            k -= 1
        entry_time = float(log.times[k])

    settle = t_start + 10.0 / quantities.lambda_v
    if float(log.times[-1]) < settle:
        ultimately = None
    else:
        tail = log.times >= settle
        ultimately = bool(np.all(log.error_norm[tail] <= radius_u + ULTIMATE_ATOL))

    ordered = bool(
        quantities.radius_ultimate <= quantities.radius_initial + 1e-12
        and (math.isinf(quantities.chi) or quantities.radius_initial <= quantities.chi + 1e-12)
    )
    return BoundReport(
        quantities=quantities,
        e0_norm=e0,
        e0_in_initial_set=in_s,
        applicable=applicable,
        violations=violations,
        trajectory_in_domain=in_domain,
        ultimate_entry_time=entry_time,
        ultimately_bounded=ultimately,
        radii_ordered=ordered,
        terminal_error=float(log.error_norm[-1]),
    )


def fit_decay_rate(times: np.ndarray, norms: np.ndarray, t_start: float, t_end: float) -> float:
    """Exponential decay rate of ``norms`` over a time window, by a
    log-linear least-squares fit."""
    times = np.asarray(times, dtype=float)
    norms = np.asarray(norms, dtype=float)
    mask = (times >= t_start) & (times <= t_end) & (norms > 0.0)
    if int(mask.sum()) < 2:
        raise ValueError("window contains fewer than two usable samples")
    slope, _ = np.polyfit(times[mask], np.log(norms[mask]), 1)
    return -float(slope)


def formation_residual_split(scenario: Scenario, q: np.ndarray, p: np.ndarray) -> tuple[float | None, float | None]:
    """Formation residual and sensing lag at one configuration.

    The first value is the worst deviation over inter-agent commanded edges
    (the formation shape); the second is the worst deviation over commanded
    agent-target edges, which under a fast-moving reference carries the
    quasi-static tracking lag of the whole group and is reported separately.
    Either value is None when no edge of that kind carries an offset.
    """
    residuals = formation_residuals(scenario, q, p)
    agents = set(scenario.problem.agents)
    shape = [v for e, v in residuals.items() if e[0] in agents and e[1] in agents]
    sensing = [v for e, v in residuals.items() if not (e[0] in agents and e[1] in agents)]
    return (max(shape) if shape else None, max(sensing) if sensing else None)


def formation_residuals(scenario: Scenario, q: np.ndarray, p: np.ndarray) -> dict[Edge, float]:
    """Deviation of each commanded edge from its commanded relative value."""
    if not scenario.edge_offsets:
        return {}
    prob = scenario.problem
    sheaf = prob.sheaf
    full = prob.stack_full(np.asarray(q, dtype=float), np.asarray(p, dtype=float))
    out = {}
    for raw, commanded in scenario.edge_offsets.items():
        e = (min(raw), max(raw))
        i, j = e
        fi = sheaf.restrictions[(i, e)]
        fj = sheaf.restrictions[(j, e)]
        actual = fi @ full[sheaf.vertex_slice(i)] - fj @ full[sheaf.vertex_slice(j)]
        out[e] = float(np.linalg.norm(actual - np.asarray(commanded, dtype=float)))
    return out

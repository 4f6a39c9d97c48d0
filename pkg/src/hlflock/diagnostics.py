"""Quantitative probes over simulated trajectories.

Each probe turns one of the model's qualitative guarantees into a check with
an explicit tolerance: velocities stay nonnegative (scalar companion system),
speeds never leave the initial ball and per-coordinate hull, the two-agent
velocity gap sits under an explicit exponential envelope, dissipation
functionals never increase, and an admissibly forced root still drags the
flock to consensus.

The guarantees are exact in continuous time only, so bound-style probes add a
discretization slack calibrated from the disagreement between the main
stepper and the brute-force oracle on the same run (an empirical stand-in
for C*h). Decay estimates are evaluated from t = tau onward; the window
[0, tau) is governed only by the prehistory and is excluded.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .integrator import Trajectory, simulate, simulate_oracle
from .model import LeadershipDag, Scenario, check_forcing_conditions

DIAMETER_FLOOR = 1e-12      # dV values at or below this are rounding noise
SPEED_TOL = 1e-8            # ball / hull invariance slack
DEFAULT_BOUND_TOL = 1e-6    # relative slack on exponential envelopes


class PreconditionError(ValueError):
    """The probe's hypotheses do not apply to this input."""


class InsufficientDataError(ValueError):
    """Not enough usable samples to fit."""


# ---------------------------------------------------------------------------
# Consensus series and decay fitting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConsensusSeries:
    times: np.ndarray
    velocity_diameter: np.ndarray   # max over agent pairs of |v_i - v_j|
    position_diameter: np.ndarray


def _pairwise_diameter(arr: np.ndarray) -> np.ndarray:
    # arr: (T, N, d) -> (T,) max Euclidean distance over agent pairs
    diff = arr[:, :, None, :] - arr[:, None, :, :]
    return np.sqrt(np.einsum("tijd,tijd->tij", diff, diff)).max(axis=(1, 2))


def consensus_series(traj: Trajectory) -> ConsensusSeries:
    """Exact max-over-pairs velocity and position diameters at each step."""
    if traj.times.size == 0:
        raise PreconditionError("empty trajectory")
    return ConsensusSeries(times=traj.times,
                           velocity_diameter=_pairwise_diameter(traj.v),
                           position_diameter=_pairwise_diameter(traj.x))


@dataclass(frozen=True)
class DecayFit:
    window: tuple[float, float]
    rate: float            # decay exponent (positive means shrinking)
    intercept: float       # fitted log-value at t=0
    residual_rms: float
    n_used: int
    n_censored: int


def fit_decay_rate(series: ConsensusSeries, window: tuple[float, float] | None = None,
                   floor: float = DIAMETER_FLOOR) -> DecayFit:
    """Least-squares line through (t, ln dV(t)) on the window; rate = -slope.

    Samples at or below ``floor`` are censored (they are dominated by rounding
    noise once consensus is numerically exact) and only counted.
    """
    times = series.times
    values = series.velocity_diameter
    if window is None:
        window = (float(times[0] + 0.5 * (times[-1] - times[0])), float(times[-1]))
    t_a, t_b = window
    in_window = (times >= t_a - 1e-12) & (times <= t_b + 1e-12)
    usable = in_window & (values > floor)
    n_censored = int(np.count_nonzero(in_window) - np.count_nonzero(usable))
    n_used = int(np.count_nonzero(usable))
    if n_used < 10:
        raise InsufficientDataError(
            f"insufficient decay data: {n_used} uncensored samples in window {window}")
    t_fit = times[usable]
    y_fit = np.log(values[usable])
    slope, intercept = np.polyfit(t_fit, y_fit, 1)
    resid = y_fit - (slope * t_fit + intercept)
    return DecayFit(window=(float(t_a), float(t_b)), rate=float(-slope),
                    intercept=float(intercept),
                    residual_rms=float(np.sqrt(np.mean(resid ** 2))),
                    n_used=n_used, n_censored=n_censored)


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------

def history_speed_bound(traj: Trajectory) -> float:
    """Largest speed over all agents and prehistory samples (the invariant
    velocity-ball radius)."""
    if traj.hist_v.size == 0:
        raise PreconditionError("trajectory carries no prehistory samples")
    return float(np.sqrt(np.einsum("knd,knd->kn", traj.hist_v, traj.hist_v)).max())


def calibrate_step_slack(traj: Trajectory, refinement: int = 2) -> float:
    """Empirical discretization slack for bound checks on this run: the max
    velocity discrepancy against the independent Euler oracle. Plays the role
    of C*h; both schemes are consistent, so it vanishes with the step."""
    if traj.scenario is None:
        raise PreconditionError("trajectory has no scenario attached")
    oracle = simulate_oracle(traj.scenario, refinement)
    return float(np.abs(traj.v - oracle.v).max())


def _require_scenario(traj: Trajectory) -> Scenario:
    if traj.scenario is None:
        raise PreconditionError("this probe needs the trajectory's scenario")
    return traj.scenario


@dataclass
class ProbeReport:
    """Outcome of one probe. ``passed`` is None when the probe's hypotheses
    do not hold for the input (skipped, neither pass nor fail)."""
    name: str
    passed: bool | None
    details: dict = field(default_factory=dict)
    series: dict[str, np.ndarray] | None = None

    @property
    def skipped(self) -> bool:
        return self.passed is None

    def to_text(self) -> str:
        status = "SKIP" if self.passed is None else ("PASS" if self.passed else "FAIL")
        parts = []
        for key, val in self.details.items():
            if isinstance(val, float):
                parts.append(f"{key}={val:.6g}")
            else:
                parts.append(f"{key}={val}")
        return f"{self.name}: {status}" + (f" ({', '.join(parts)})" if parts else "")

    def to_dict(self) -> dict:
        def clean(v):
            if isinstance(v, (np.floating, np.integer)):
                return v.item()
            if isinstance(v, np.bool_):
                return bool(v)
            return v
        return {"name": self.name, "passed": self.passed,
                "details": {k: clean(v) for k, v in self.details.items()}}


# ---------------------------------------------------------------------------
# Two-agent exponential envelope
# ---------------------------------------------------------------------------

def check_two_flock_bound(traj: Trajectory, tol: float = DEFAULT_BOUND_TOL,
                          slack: float | None = None) -> ProbeReport:
    """Check the two-agent velocity gap against its exponential envelope.

    The gap w(t) = v2 - v1 must satisfy, for every stored t >= tau,

        |w(t)| <= (1 + tol + slack) * exp(-mu0 * psi(y_M) * (t - tau)) * |w(tau)|

    where y_M = sup_{t>=tau} |x2(t) - x1(t)| + 2*tau*D0 is measured from the
    run itself and D0 is the prehistory speed bound. ``slack`` absorbs
    discretization error and defaults to the oracle-calibrated value.
    """
    scenario = _require_scenario(traj)
    if scenario.n_agents != 2:
        raise PreconditionError("two-agent bound needs exactly 2 agents")
    if not scenario.forcing.is_zero:
        raise PreconditionError("the envelope assumes a constant-velocity root")
    if slack is None:
        slack = calibrate_step_slack(traj)
    tau = scenario.tau
    after = traj.times >= tau - 1e-12
    if not np.any(after):
        raise PreconditionError("trajectory ends before t = tau")
    w = np.linalg.norm(traj.v[:, 1, :] - traj.v[:, 0, :], axis=1)
    y = np.linalg.norm(traj.x[:, 1, :] - traj.x[:, 0, :], axis=1)
    d0 = history_speed_bound(traj)
    y_m = float(y[after].max() + 2.0 * tau * d0)
    rate = scenario.kernel.mu0 * scenario.potential(y_m)
    t_tau = traj.times[after][0]
    w_tau = w[after][0]
    envelope = (1.0 + tol + slack) * np.exp(-rate * (traj.times[after] - t_tau)) * w_tau
    excess = w[after] - envelope
    passed = bool(np.all(excess <= 0.0))
    return ProbeReport(
        name="two_flock_bound", passed=passed,
        details={"y_m": y_m, "rate": float(rate), "gap_at_tau": float(w_tau),
                 "max_excess": float(excess.max()), "slack": float(slack), "tol": tol},
        series={"times": traj.times[after], "gap": w[after], "envelope": envelope})


# ---------------------------------------------------------------------------
# Positivity and invariance
# ---------------------------------------------------------------------------

def positivity_probe(scenario: Scenario) -> ProbeReport:
    """Run the scalar companion system and verify values never go negative.

    Realized as the velocity component of a one-dimensional flock whose
    velocity prehistories are all nonnegative (the positions evolve and feed
    the potential, which exercises the production code path). Supplying a
    negative prehistory violates the hypothesis and is an error.
    """
    scenario.validate()
    if scenario.dim != 1:
        raise PreconditionError("positivity probe runs on one-dimensional scenarios")
    if not scenario.forcing.is_zero:
        raise PreconditionError("positivity probe assumes the unforced system")
    grid = (np.arange(scenario.delay_steps + 1) - scenario.delay_steps) * scenario.dt
    _, vs = scenario.history.sample(grid)
    if vs.min() < 0:
        raise PreconditionError(f"negative history value {vs.min()} violates the hypothesis")
    traj = simulate(scenario)
    values = traj.v[:, :, 0]
    k, agent = np.unravel_index(np.argmin(values), values.shape)
    min_value = float(values[k, agent])
    return ProbeReport(
        name="positivity", passed=bool(min_value >= -SPEED_TOL),
        details={"min_value": min_value, "at_time": float(traj.times[k]),
                 "agent": int(agent + 1), "tolerance": SPEED_TOL})


def ball_invariance_probe(traj: Trajectory) -> ProbeReport:
    """Speeds stay inside the prehistory ball; each velocity coordinate stays
    inside the prehistory's per-coordinate hull. The statement covers the
    unforced system only, so a forced trajectory is a precondition error."""
    scenario = _require_scenario(traj)
    if not scenario.forcing.is_zero:
        raise PreconditionError("ball invariance assumes the unforced system")
    d0 = history_speed_bound(traj)
    speeds = np.sqrt(np.einsum("knd,knd->kn", traj.v, traj.v))
    max_speed = float(speeds.max())
    hull_hi = traj.hist_v.max(axis=(0, 1))    # per coordinate
    hull_lo = traj.hist_v.min(axis=(0, 1))
    run_hi = traj.v.max(axis=(0, 1))
    run_lo = traj.v.min(axis=(0, 1))
    hull_excess = float(np.maximum(run_hi - hull_hi, hull_lo - run_lo).max())
    passed = bool(max_speed <= d0 + SPEED_TOL and hull_excess <= SPEED_TOL)
    return ProbeReport(
        name="ball_invariance", passed=passed,
        details={"speed_bound": d0, "max_speed": max_speed,
                 "speed_excess": max_speed - d0, "hull_excess": hull_excess,
                 "tolerance": SPEED_TOL})


# ---------------------------------------------------------------------------
# Fluctuation around the leader average
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HatLeaderSeries:
    """Average of an agent's direct leaders, and the agent's deviation from it."""
    times: np.ndarray
    hat_x: np.ndarray    # (T, d) leader-average position
    hat_v: np.ndarray
    y: np.ndarray        # (T, d) position deviation
    w: np.ndarray        # (T, d) velocity deviation


def hat_leader_series(traj: Trajectory, dag: LeadershipDag, agent: int) -> HatLeaderSeries:
    if agent < 2:
        raise PreconditionError("agent 1 has no leaders to average")
    leaders = sorted(dag.leaders_of(agent))
    if not leaders:
        raise PreconditionError(f"agent {agent} has no leaders")
    idx = [j - 1 for j in leaders]
    hat_x = traj.x[:, idx, :].mean(axis=1)
    hat_v = traj.v[:, idx, :].mean(axis=1)
    return HatLeaderSeries(times=traj.times, hat_x=hat_x, hat_v=hat_v,
                           y=traj.x[:, agent - 1, :] - hat_x,
                           w=traj.v[:, agent - 1, :] - hat_v)


# ---------------------------------------------------------------------------
# Dissipation functionals
# ---------------------------------------------------------------------------

def _potential_primitive(scenario: Scenario, s_max: float):
    """Numeric primitive of the potential (cumulative trapezoid from 0),
    returned as an interpolation grid. Non-decreasing with value 0 at 0."""
    s_grid = np.linspace(0.0, max(s_max, 1e-6), 65537)
    psi = scenario.potential(s_grid)
    phi = cumulative_trapezoid(psi, s_grid, initial=0.0)
    return s_grid, phi


def lyapunov_probe(traj: Trajectory, gain: float, offset: float, agent: int = 2,
                   tol: float = DEFAULT_BOUND_TOL, slack: float | None = None) -> ProbeReport:
    """Monitor the dissipation functionals |w| +/- gain * phi(|y| + offset).

    (y, w) is the designated fluctuation pair: agent's deviation from its
    leader average (for a two-agent flock with agent=2 this is simply the
    state difference). phi is the numeric primitive of the potential. Along
    an unforced trajectory both functionals are non-increasing from t = tau
    on, so the maximum forward difference (F(t+h) - F(t))/h must stay below
    tol plus the discretization slack.
    """
    scenario = _require_scenario(traj)
    if slack is None:
        slack = calibrate_step_slack(traj)
    fluct = hat_leader_series(traj, scenario.dag, agent)
    w = np.linalg.norm(fluct.w, axis=1)
    y = np.linalg.norm(fluct.y, axis=1)
    s_grid, phi_grid = _potential_primitive(scenario, float(y.max() + offset) * 1.05 + 1.0)
    phi = np.interp(y + offset, s_grid, phi_grid)
    upper = w + gain * phi
    lower = w - gain * phi
    h = scenario.dt
    after = traj.times[:-1] >= scenario.tau - 1e-12
    if not np.any(after):
        raise PreconditionError("trajectory ends before t = tau")
    fd_upper = (np.diff(upper) / h)[after]
    fd_lower = (np.diff(lower) / h)[after]
    max_fd = float(max(fd_upper.max(), fd_lower.max()))
    tol_eff = tol + slack
    return ProbeReport(
        name="lyapunov_dissipation", passed=bool(max_fd <= tol_eff),
        details={"max_forward_difference": max_fd, "tolerance": float(tol_eff),
                 "gain": float(gain), "offset": float(offset), "slack": float(slack)},
        series={"times": traj.times, "upper": upper, "lower": lower})


# ---------------------------------------------------------------------------
# Free-will leader
# ---------------------------------------------------------------------------

def free_will_consensus_probe(traj: Trajectory, target: float = 1e-3,
                              monotone_tol: float = 1e-8) -> ProbeReport:
    """Consensus under an admissibly forced root.

    Requires the forcing hypotheses to hold (integrability plus the decay
    conditions); if they do not, the probe reports "hypotheses unmet" and
    asserts nothing. Otherwise it checks that the final velocity diameter is
    at most ``target``, that the diameter is non-increasing (within
    ``monotone_tol`` per step) on the final quarter of the run, and that the
    root speed never exceeds its initial speed plus the forcing's L1 mass.
    """
    scenario = _require_scenario(traj)
    conditions = check_forcing_conditions(scenario.forcing, scenario.n_agents)
    flags = {"integrable": conditions.integrable,
             "little_o_condition": conditions.little_o_condition,
             "weighted_L1": conditions.weighted_L1}
    if not conditions.all_satisfied:
        return ProbeReport(name="free_will_consensus", passed=None,
                           details={"status": "hypotheses unmet", **flags})
    series = consensus_series(traj)
    dv = series.velocity_diameter
    final_ok = bool(dv[-1] <= target)
    quarter = traj.times >= traj.times[-1] - 0.25 * (traj.times[-1] - traj.times[0])
    increments = np.diff(dv[quarter])
    monotone_ok = bool(increments.size == 0 or increments.max() <= monotone_tol)
    root_speed = np.linalg.norm(traj.v[:, 0, :], axis=1)
    speed_cap = float(np.linalg.norm(traj.v[0, 0, :]) + scenario.forcing.l1_norm())
    root_ok = bool(root_speed.max() <= speed_cap + SPEED_TOL)
    return ProbeReport(
        name="free_will_consensus", passed=final_ok and monotone_ok and root_ok,
        details={"final_diameter": float(dv[-1]), "target": target,
                 "tail_max_increment": float(increments.max()) if increments.size else 0.0,
                 "max_root_speed": float(root_speed.max()), "root_speed_cap": speed_cap,
                 **flags})

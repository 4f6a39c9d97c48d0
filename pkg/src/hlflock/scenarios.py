"""Scenario generation and persistence.

Scenario files are plain JSON with keys mirroring the :class:`Scenario`
fields (see the README for the schema). Saving and loading round-trips every
number bit-exactly, so a persisted run can be reproduced. Generator files,
recognized by a top-level ``"generator"`` key, describe a randomized family
instead of a single instance; loading one draws a concrete scenario from the
recorded seed.

Randomized scenarios come from numpy's seedable PCG64 generator, so the same
seed reproduces the same scenario on any platform, and the seed is recorded
in the scenario itself and in every saved run.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict, replace
from pathlib import Path
from typing import Iterable

import numpy as np

from .integrator import Trajectory, write_trajectory_csv
from .model import (DelayKernel, HistoryFn, HistorySpec, LeaderForcing,
                    LeadershipDag, Potential, Scenario, ScenarioError)


# ---------------------------------------------------------------------------
# Randomized generation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GeneratorSpec:
    """Recipe for a randomized scenario.

    Topologies: "chain" (each agent led by its predecessor), "binary_tree"
    (agent i led by i//2), "random_hl" (each lower-indexed agent becomes a
    leader independently with ``edge_prob``; an empty draw is repaired with
    one uniformly chosen leader, so the ordering constraints hold by
    construction). Delay span, potential exponent, and kernel shape are
    drawn from the listed ranges; the step is tied to the delay span so the
    window is always ``delay_steps`` steps wide.
    """
    topology: str
    n_agents: int
    dim: int = 1
    position_range: tuple[float, float] = (-1.0, 1.0)
    velocity_range: tuple[float, float] = (-1.0, 1.0)
    rng_seed: int = 0
    edge_prob: float = 0.5
    tau_range: tuple[float, float] = (0.05, 0.5)
    delay_steps: int = 8
    sim_span: float = 1.0
    beta_choices: tuple[float, ...] = (0.0, 0.25, 0.5)
    kernel_shapes: tuple[str, ...] = ("uniform", "triangular")


def _topology_dag(spec: GeneratorSpec, rng: np.random.Generator) -> LeadershipDag:
    n = spec.n_agents
    if spec.topology == "chain":
        return LeadershipDag.chain(n)
    if spec.topology == "binary_tree":
        return LeadershipDag(n, {i: {i // 2} for i in range(2, n + 1)})
    if spec.topology == "random_hl":
        if n > 1 and not 0.0 < spec.edge_prob <= 1.0:
            raise ScenarioError(f"random_hl needs edge_prob in (0, 1], got {spec.edge_prob}")
        leaders = {}
        for i in range(2, n + 1):
            picks = {j for j in range(1, i) if rng.random() < spec.edge_prob}
            if not picks:
                picks = {int(rng.integers(1, i))}
            leaders[i] = picks
        return LeadershipDag(n, leaders)
    raise ScenarioError(f"unknown topology {spec.topology!r}")


def generate(spec: GeneratorSpec) -> Scenario:
    """Draw a concrete scenario; deterministic for a given seed."""
    if spec.n_agents < 1:
        raise ScenarioError(f"n_agents must be >= 1, got {spec.n_agents}")
    rng = np.random.default_rng(spec.rng_seed)
    dag = _topology_dag(spec, rng)

    tau = float(rng.uniform(*spec.tau_range))
    dt = tau / spec.delay_steps
    n_steps = max(spec.delay_steps, int(math.ceil(spec.sim_span / dt)))
    beta = float(rng.choice(np.asarray(spec.beta_choices, dtype=float)))
    shape = str(spec.kernel_shapes[int(rng.integers(len(spec.kernel_shapes)))])
    if shape == "uniform":
        kernel = DelayKernel.uniform(tau)
    elif shape == "triangular":
        kernel = DelayKernel.triangular(tau)
    elif shape == "truncated_bump":
        kernel = DelayKernel.truncated_bump(tau)
    else:
        raise ScenarioError(f"unknown kernel shape {shape!r} in generator spec")

    x0 = rng.uniform(*spec.position_range, size=(spec.n_agents, spec.dim))
    v0 = rng.uniform(*spec.velocity_range, size=(spec.n_agents, spec.dim))
    return Scenario(dag=dag, dim=spec.dim, potential=Potential.cucker_smale(beta),
                    kernel=kernel, history=HistorySpec.constant(x0, v0),
                    forcing=LeaderForcing.zero(), t_end=n_steps * dt, dt=dt,
                    rng_seed=spec.rng_seed).validate()


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def _history_fn_to_dict(fn: HistoryFn) -> dict:
    if fn.kind == "constant":
        return {"kind": "constant", "value": fn.value.tolist()}
    if fn.kind == "affine":
        return {"kind": "affine", "value": fn.value.tolist(), "slope": fn.slope.tolist()}
    return {"kind": "table", "times": fn.times.tolist(), "values": fn.values.tolist()}


def _history_fn_from_dict(d: dict, where: str) -> HistoryFn:
    kind = d.get("kind")
    try:
        if kind == "constant":
            return HistoryFn("constant", value=np.asarray(d["value"], dtype=float))
        if kind == "affine":
            return HistoryFn("affine", value=np.asarray(d["value"], dtype=float),
                             slope=np.asarray(d["slope"], dtype=float))
        if kind == "table":
            return HistoryFn("table", times=np.asarray(d["times"], dtype=float),
                             values=np.asarray(d["values"], dtype=float))
    except KeyError as e:
        raise ScenarioError(f"{where}: missing key {e.args[0]!r} for {kind} history") from None
    raise ScenarioError(f"{where}: unknown history kind {kind!r}")


def scenario_to_dict(scenario: Scenario) -> dict:
    pot = scenario.potential
    if pot.family == "cucker_smale":
        pot_d = {"family": "cucker_smale", "beta": pot.beta}
    elif pot.family == "table":
        pot_d = {"family": "table", "distances": pot.distances.tolist(),
                 "values": pot.values.tolist()}
    else:
        raise ScenarioError("custom potentials hold arbitrary callables and cannot be saved")

    ker = scenario.kernel
    if ker.shape == "table":
        ker_d = {"shape": "table", "times": ker._grid_t.tolist(),
                 "values": ker._grid_v.tolist()}
    else:
        param = "peak" if ker.shape == "triangular" else "height"
        ker_d = {"shape": ker.shape, "tau": ker.tau, param: ker.height}

    forc = scenario.forcing
    if forc.family == "zero":
        forc_d = {"family": "zero"}
    elif forc.family == "power_law":
        forc_d = {"family": "power_law", "amplitude": forc.amplitude,
                  "exponent": forc.exponent, "direction": forc.direction.tolist()}
    elif forc.family == "log_damped":
        forc_d = {"family": "log_damped", "amplitude": forc.amplitude,
                  "decay_power": forc.decay_power, "direction": forc.direction.tolist()}
    else:
        forc_d = {"family": "table", "times": forc.times.tolist(),
                  "magnitudes": forc.magnitudes.tolist(),
                  "direction": forc.direction.tolist()}

    history = [{"position": _history_fn_to_dict(p), "velocity": _history_fn_to_dict(v)}
               for p, v in zip(scenario.history.positions, scenario.history.velocities)]
    leaders = {str(i): sorted(scenario.dag.leaders_of(i))
               for i in range(1, scenario.n_agents + 1) if scenario.dag.leaders_of(i)}
    return {"n_agents": scenario.n_agents, "dim": scenario.dim, "leaders": leaders,
            "potential": pot_d, "kernel": ker_d, "history": history, "forcing": forc_d,
            "t_end": scenario.t_end, "dt": scenario.dt, "rng_seed": scenario.rng_seed}


def _require(d: dict, key: str, where: str):
    if key not in d:
        raise ScenarioError(f"{where}: missing required field {key!r}")
    return d[key]


def scenario_from_dict(data: dict, where: str = "scenario") -> Scenario:
    try:
        n_agents = int(_require(data, "n_agents", where))
        dim = int(_require(data, "dim", where))
        leaders = {int(i): [int(j) for j in js]
                   for i, js in _require(data, "leaders", where).items()}
        dag = LeadershipDag(n_agents, leaders)

        pot_d = _require(data, "potential", where)
        family = pot_d.get("family")
        if family == "cucker_smale":
            potential = Potential.cucker_smale(float(pot_d["beta"]))
        elif family == "table":
            potential = Potential.table(pot_d["distances"], pot_d["values"])
        else:
            raise ScenarioError(f"{where}.potential: unknown family {family!r}")

        ker_d = _require(data, "kernel", where)
        shape = ker_d.get("shape")
        if shape == "uniform":
            kernel = DelayKernel.uniform(float(ker_d["tau"]), ker_d.get("height"))
        elif shape == "triangular":
            kernel = DelayKernel.triangular(float(ker_d["tau"]), ker_d.get("peak"))
        elif shape == "truncated_bump":
            kernel = DelayKernel.truncated_bump(float(ker_d["tau"]), ker_d.get("height"))
        elif shape == "table":
            kernel = DelayKernel.table(ker_d["times"], ker_d["values"])
        else:
            raise ScenarioError(f"{where}.kernel: unknown shape {shape!r}")

        hist_d = _require(data, "history", where)
        positions, velocities = [], []
        for k, entry in enumerate(hist_d):
            positions.append(_history_fn_from_dict(entry["position"], f"{where}.history[{k}].position"))
            velocities.append(_history_fn_from_dict(entry["velocity"], f"{where}.history[{k}].velocity"))
        history = HistorySpec(positions, velocities)

        forc_d = data.get("forcing", {"family": "zero"})
        fam = forc_d.get("family", "zero")
        if fam == "zero":
            forcing = LeaderForcing.zero()
        elif fam == "power_law":
            forcing = LeaderForcing.power_law(float(forc_d["amplitude"]),
                                              float(forc_d["exponent"]),
                                              direction=forc_d["direction"])
        elif fam == "log_damped":
            forcing = LeaderForcing("log_damped", amplitude=float(forc_d["amplitude"]),
                                    decay_power=float(forc_d["decay_power"]),
                                    direction=np.asarray(forc_d["direction"], dtype=float))
        elif fam == "table":
            forcing = LeaderForcing.table(forc_d["times"], forc_d["magnitudes"],
                                          direction=forc_d["direction"])
        else:
            raise ScenarioError(f"{where}.forcing: unknown family {fam!r}")

        scenario = Scenario(dag=dag, dim=dim, potential=potential, kernel=kernel,
                            history=history, forcing=forcing,
                            t_end=float(_require(data, "t_end", where)),
                            dt=float(_require(data, "dt", where)),
                            rng_seed=int(data.get("rng_seed", 0)))
    except ScenarioError:
        raise
    except (KeyError, TypeError, ValueError, AttributeError) as e:
        raise ScenarioError(f"{where}: malformed scenario data ({e})") from e
    problems = scenario.problems()
    if problems:
        raise ScenarioError(f"{where}: " + "; ".join(problems))
    return scenario


def _generator_from_dict(data: dict, where: str) -> GeneratorSpec:
    known = {f for f in GeneratorSpec.__dataclass_fields__}
    extra = set(data) - known
    if extra:
        raise ScenarioError(f"{where}: unknown generator fields {sorted(extra)}")
    try:
        kwargs = dict(data)
        for key in ("position_range", "velocity_range", "tau_range",
                    "beta_choices", "kernel_shapes"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return GeneratorSpec(**kwargs)
    except TypeError as e:
        raise ScenarioError(f"{where}: malformed generator spec ({e})") from e


def load_scenario(path, seed: int | None = None) -> Scenario:
    """Load a scenario file; a file with a top-level "generator" key is drawn
    from its recorded (or overridden) seed instead."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ScenarioError(f"{path}: invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}") from e
    if not isinstance(data, dict):
        raise ScenarioError(f"{path}: expected a JSON object at the top level")
    if "generator" in data:
        spec = _generator_from_dict(data["generator"], f"{path}:generator")
        if seed is not None:
            spec = GeneratorSpec(**{**asdict(spec), "rng_seed": seed})
        return generate(spec)
    scenario = scenario_from_dict(data, where=str(path))
    if seed is not None:
        scenario = replace(scenario, rng_seed=seed)
    return scenario


def save_scenario(scenario: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(scenario), indent=2) + "\n")


def save_run(traj: Trajectory, reports: Iterable | None, outdir) -> Path:
    """Persist a run bundle: scenario copy, trajectory CSV, and probe report."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    if traj.scenario is not None:
        save_scenario(traj.scenario, outdir / "scenario.json")
    write_trajectory_csv(traj, outdir / "trajectory.csv")
    if reports is not None:
        reports = list(reports)
        payload = [r.to_dict() for r in reports]
        (outdir / "report.json").write_text(json.dumps(payload, indent=2) + "\n")
        (outdir / "report.txt").write_text("\n".join(r.to_text() for r in reports) + "\n")
    return outdir

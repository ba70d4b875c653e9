"""Two-step pumping schedule.

Step 1 pumps transformed mode 1 with ground-level atoms; step 2 swaps the
drive strengths and retunes the detunings so the same squeezed basis is
kept while transformed mode 2 is pumped with atoms in the other ground
level.  Both steps then share the squeezed vacuum as their dark state.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import comb

from .analysis import (
    SqueezingReport,
    observable_matrices,
    preparation_time,
    recorder_from_matrices,
    squeezing_report,
)
from .dynamics import ArrivalProcess, Trajectory, run_collision_model
from .gaussian import (
    GaussianState,
    gaussian_epr_variances,
    gaussian_tmsv,
    run_protocol_gaussian,
)
from .hilbert import DensityMatrix, SpaceDescriptor, basis_state
from .model import (
    DISPERSIVE_LIMIT,
    PhysicalParams,
    build_squeeze_operator,
    derive_rates,
    spontaneous_decay_estimate,
)

EPSILON_MATCH_TOL = 1e-12
DETUNING_SUM_TOL = 1e-9
ENGINES = ("fock", "gaussian", "collision")

TRANSIT_LIMIT = 0.2
OCCUPANCY_LIMIT = 0.2
DECAY_BUDGET = 0.1


@dataclass(frozen=True)
class SwapRule:
    """Step-2 drive amplitudes.  The default is the symmetric exchange."""

    omega1: float
    g1: float
    omega2: float
    g2: float

    @classmethod
    def symmetric(cls, p: PhysicalParams) -> "SwapRule":
        return cls(omega1=p.omega2, g1=p.g2, omega2=p.omega1, g2=p.g1)


@dataclass(frozen=True)
class ProtocolStep:
    """One pumping interval: parameters, injected atom level, duration."""

    params: PhysicalParams
    atom_state: str
    duration: float
    channel: str

    def __post_init__(self):
        if self.duration < 0:
            raise ValueError("duration must be nonnegative")
        d = derive_rates(self.params)
        if d.channel != self.channel:
            raise ValueError(
                f"declared channel {self.channel!r} but parameters derive {d.channel!r}"
            )
        expected_atom = "g" if self.channel == "b1" else "h"
        if self.atom_state != expected_atom:
            raise ValueError(
                f"channel {self.channel} pumps with atoms in {expected_atom!r}, "
                f"got {self.atom_state!r}"
            )

    @property
    def derived(self):
        return derive_rates(self.params)


@dataclass(frozen=True)
class ProtocolSpec:
    """Ordered pumping steps plus the engine and numerical knobs to run them."""

    steps: Sequence[ProtocolStep]
    engine: str = "fock"
    seed: int = 0
    truncation: tuple = (15, 15)

    def __post_init__(self):
        if self.engine not in ENGINES:
            raise ValueError(f"engine must be one of {ENGINES}, got {self.engine!r}")
        steps = tuple(self.steps)
        if not steps:
            raise ValueError("protocol needs at least one step")
        trunc = tuple(int(n) for n in self.truncation)
        if len(trunc) != 2 or min(trunc) < 1:
            raise ValueError(f"truncation must be two positive integers, got {self.truncation!r}")
        rates = [derive_rates(s.params) for s in steps]
        eps0 = rates[0].epsilon
        for d in rates[1:]:
            if abs(d.epsilon - eps0) > EPSILON_MATCH_TOL * max(1.0, abs(eps0)):
                raise ValueError(
                    f"steps disagree on the squeezing parameter: {eps0!r} vs {d.epsilon!r}"
                )
        sum0 = abs(steps[0].params.delta1) + abs(steps[0].params.delta2)
        for s in steps[1:]:
            total = abs(s.params.delta1) + abs(s.params.delta2)
            if abs(total - sum0) > DETUNING_SUM_TOL * max(1.0, abs(sum0)):
                raise ValueError(
                    f"detuning sum not conserved across steps: {sum0!r} vs {total!r}"
                )
        object.__setattr__(self, "steps", steps)
        object.__setattr__(self, "truncation", trunc)

    @property
    def epsilon(self) -> float:
        return derive_rates(self.steps[0].params).epsilon

    def to_json(self) -> dict:
        return {
            "steps": [
                {
                    "params": s.params.to_hz_dict(),
                    "atom_state": s.atom_state,
                    "duration": s.duration,
                    "channel": s.channel,
                }
                for s in self.steps
            ],
            "engine": self.engine,
            "seed": self.seed,
            "truncation": list(self.truncation),
        }

    @classmethod
    def from_json(cls, data: dict) -> "ProtocolSpec":
        steps = [
            ProtocolStep(
                params=PhysicalParams.from_hz_dict(item["params"]),
                atom_state=item["atom_state"],
                duration=float(item["duration"]),
                channel=item["channel"],
            )
            for item in data["steps"]
        ]
        return cls(
            steps=steps,
            engine=data.get("engine", "fock"),
            seed=int(data.get("seed", 0)),
            truncation=tuple(data.get("truncation", (15, 15))),
        )


def build_two_step_protocol(
    step1: PhysicalParams,
    swap_rule: Optional[SwapRule] = None,
    durations: Optional[Sequence[float]] = None,
    engine: str = "fock",
    seed: int = 0,
    truncation: tuple = (15, 15),
    n_target: float = 0.1,
) -> ProtocolSpec:
    """Construct the two-step schedule from the step-1 parameter set.

    Step-2 detunings follow from the swapped drive strengths:
    |delta1'| = (P1'/P2) |delta2| and |delta2'| = (P2'/P1) |delta1| with
    P the drive-coupling products, which makes the step-2 rate ordering the
    exact reciprocal of step 1 (same r, same epsilon).  The default swap
    exchanges the two drive pairs, conserving the detuning sum exactly.
    Durations default to the pump-down time to n_target per step.
    """
    d1 = derive_rates(step1)
    if d1.channel != "b1":
        raise ValueError("step 1 must have theta1 > theta2 (channel b1)")
    rule = SwapRule.symmetric(step1) if swap_rule is None else swap_rule

    p1 = abs(step1.omega1 * step1.g1)
    p2 = abs(step1.omega2 * step1.g2)
    p1_new = abs(rule.omega1 * rule.g1)
    p2_new = abs(rule.omega2 * rule.g2)
    # drive ordering that keeps step 2 on the reciprocal side; the symmetric
    # exchange sits exactly on the boundary
    if p1 - p2_new < p1_new - p2 - 1e-12 * max(p1, p2, 1.0):
        raise ValueError(
            "swap rule violates the drive ordering: "
            f"{p1:g} - {p2_new:g} < {p1_new:g} - {p2:g}"
        )
    delta1_new = -(p1_new / p2) * abs(step1.delta2)
    delta2_new = (p2_new / p1) * abs(step1.delta1)
    step2 = PhysicalParams(
        omega1=rule.omega1,
        omega2=rule.omega2,
        g1=rule.g1,
        g2=rule.g2,
        delta1=delta1_new,
        delta2=delta2_new,
        gamma_e=step1.gamma_e,
        r_a=step1.r_a,
        tau=step1.tau,
    )
    d2 = derive_rates(step2)
    if d2.channel != "b2":
        raise ValueError("swap rule failed to flip the channel ordering")

    if durations is None:
        if d1.gamma > 0:
            t_step = preparation_time(d1.r, d1.gamma, n_target).t_step
        else:
            t_step = 0.0
        durations = (t_step, t_step)
    if len(durations) != 2:
        raise ValueError("durations must give one time per step")

    steps = (
        ProtocolStep(params=step1, atom_state="g", duration=float(durations[0]), channel="b1"),
        ProtocolStep(params=step2, atom_state="h", duration=float(durations[1]), channel="b2"),
    )
    return ProtocolSpec(steps=steps, engine=engine, seed=seed, truncation=truncation)


@dataclass(frozen=True)
class RegimeCheck:
    name: str
    value: float
    limit: float
    passed: bool


@dataclass(frozen=True)
class RegimeReport:
    checks: tuple

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list:
        return [c for c in self.checks if not c.passed]

    def to_json(self) -> dict:
        return {
            c.name: {"value": c.value, "limit": c.limit, "passed": c.passed}
            for c in self.checks
        }


def validate_regime(p: PhysicalParams, d) -> RegimeReport:
    """Check the approximations behind the effective dynamics.

    Reports, never raises: deliberately running outside the regime is a
    legitimate numerical experiment.
    """
    checks = [
        RegimeCheck(
            name="dispersive_ratio",
            value=p.dispersive_ratio,
            limit=DISPERSIVE_LIMIT,
            passed=p.dispersive_ratio <= DISPERSIVE_LIMIT,
        ),
        RegimeCheck(
            name="transit_phase",
            value=d.theta_b * p.tau,
            limit=TRANSIT_LIMIT,
            passed=d.theta_b * p.tau <= TRANSIT_LIMIT,
        ),
        RegimeCheck(
            name="beam_occupancy",
            value=p.r_a * p.tau,
            limit=OCCUPANCY_LIMIT,
            passed=p.r_a * p.tau <= OCCUPANCY_LIMIT,
        ),
    ]
    decay_rate = spontaneous_decay_estimate(p).rate
    if decay_rate == 0.0:
        decay_budget = 0.0
    elif d.gamma > 0:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            decay_budget = decay_rate * preparation_time(d.r, d.gamma).t_total
    else:
        decay_budget = math.inf
    checks.append(
        RegimeCheck(
            name="decay_budget",
            value=decay_budget,
            limit=DECAY_BUDGET,
            passed=decay_budget <= DECAY_BUDGET,
        )
    )
    return RegimeReport(checks=tuple(checks))


def _damping_pass(rho4: np.ndarray, eta: float, mode: int) -> np.ndarray:
    """Exact amplitude-damping map on one factor of rho reshaped (N1,N2,N1,N2).

    Population flows only downward, so the truncated space is invariant and
    the infinite-space kernel is exact here.
    """
    n = rho4.shape[0] if mode == 1 else rho4.shape[1]
    out = np.zeros_like(rho4)
    levels = np.arange(n)
    for k in range(n):
        m = levels[: n - k]
        w = np.sqrt(comb(m + k, k) * eta**m * (1.0 - eta) ** k)
        if mode == 1:
            out[: n - k, :, : n - k, :] += (
                w[:, None, None, None] * w[None, None, :, None] * rho4[k:, :, k:, :]
            )
        else:
            out[:, : n - k, :, : n - k] += (
                w[None, :, None, None] * w[None, None, None, :] * rho4[:, k:, :, k:]
            )
    return out


def _run_fock_step(rho: DensityMatrix, step: ProtocolStep, samples: int):
    """Pump-down of one transformed mode, solved exactly.

    The squeeze conjugation turns the transformed-mode jump into bare
    amplitude damping, whose Fock-basis kernel is closed form; observables
    are conjugated instead of the state, so sampling is cheap.
    """
    space = rho.space
    d = derive_rates(step.params)
    squeeze = build_squeeze_operator(space, d.epsilon).matrix
    mode = 1 if step.channel == "b1" else 2
    number_ops, combos, combo_squares = observable_matrices(space, d.epsilon)
    conj = lambda m: squeeze @ m @ squeeze.conj().T
    recorder = recorder_from_matrices(
        {k: conj(m) for k, m in number_ops.items()},
        {k: conj(m) for k, m in combos.items()},
        {k: conj(m) for k, m in combo_squares.items()},
    )
    if step.duration == 0.0:
        times = np.array([0.0])
    else:
        times = np.linspace(0.0, step.duration, samples)
    shape4 = (space.n1_trunc, space.n2_trunc, space.n1_trunc, space.n2_trunc)
    rho_b = (squeeze @ rho.matrix @ squeeze.conj().T).reshape(shape4)
    rows = [recorder(rho_b.reshape(space.dim, space.dim))]
    for dt in np.diff(times):
        rho_b = _damping_pass(rho_b, math.exp(-d.gamma * float(dt)), mode)
        rows.append(recorder(rho_b.reshape(space.dim, space.dim)))
    rho_b = rho_b.reshape(space.dim, space.dim)
    out = squeeze.conj().T @ rho_b @ squeeze
    return times, rows, DensityMatrix(space, 0.5 * (out + out.conj().T))


def _vacuum_state(truncation: tuple) -> DensityMatrix:
    space = SpaceDescriptor(1, truncation[0], truncation[1])
    return DensityMatrix.from_state_vector(space, basis_state(space, 0, 0, 0))


def _report_from_gaussian(state: GaussianState, epsilon: float) -> SqueezingReport:
    epr = gaussian_epr_variances(state)
    target = gaussian_tmsv(epsilon)
    m = state.cov + target.cov
    delta = state.mean - target.mean
    fidelity = math.exp(-0.5 * float(delta @ np.linalg.solve(m, delta)))
    fidelity /= 4.0 * math.sqrt(float(np.linalg.det(m)))
    return SqueezingReport(
        epsilon_target=epsilon,
        v_squeezed=0.5 * (epr.v_x_minus + epr.v_p_plus),
        v_antisqueezed=0.5 * (epr.v_x_plus + epr.v_p_minus),
        duan_sum=epr.duan_sum,
        n1_mean=state.mode_photon(1),
        n2_mean=state.mode_photon(2),
        fidelity=fidelity,
        truncation_leak=0.0,
    )


def _concatenate(segments: list) -> Trajectory:
    all_times: list = []
    rows: list = []
    offset = 0.0
    for seg_times, seg_rows in segments:
        shifted = np.asarray(seg_times, dtype=float) + offset
        start = 1 if all_times and shifted.size and shifted[0] <= all_times[-1] else 0
        all_times.extend(float(t) for t in shifted[start:])
        rows.extend(seg_rows[start:])
        if shifted.size:
            offset = float(shifted[-1])
    records = {key: np.array([row[key] for row in rows]) for key in rows[0]}
    return Trajectory(times=np.asarray(all_times), records=records)


def run_protocol(
    spec: ProtocolSpec,
    initial=None,
    samples_per_step: int = 51,
    include_stark: bool = False,
):
    """Execute the schedule on the chosen engine.

    Returns (Trajectory, SqueezingReport).  initial defaults to vacuum; it
    must be a DensityMatrix on the spec truncation for the fock and
    collision engines, or a GaussianState for the gaussian engine.  Regime
    violations are warnings, recorded in the trajectory diagnostics.
    """
    failures = []
    for step in spec.steps:
        report = validate_regime(step.params, derive_rates(step.params))
        failures.extend(f"{c.name}={c.value:.3g}" for c in report.failures())
    if failures:
        warnings.warn("outside validity regime: " + ", ".join(failures), stacklevel=2)

    epsilon = spec.epsilon
    if spec.engine == "gaussian":
        if initial is not None and not isinstance(initial, GaussianState):
            raise ValueError("gaussian engine takes a GaussianState initial state")
        traj = run_protocol_gaussian(
            spec.steps[0].params, spec, samples_per_step=samples_per_step, initial=initial
        )
        diagnostics = dict(traj.diagnostics)
        diagnostics["regime_failures"] = failures
        traj = Trajectory(
            times=traj.times,
            records=traj.records,
            final_state=traj.final_state,
            diagnostics=diagnostics,
        )
        return traj, _report_from_gaussian(traj.final_state, epsilon)

    state = _vacuum_state(spec.truncation) if initial is None else initial
    if not isinstance(state, DensityMatrix):
        raise ValueError(f"{spec.engine} engine takes a DensityMatrix initial state")
    expected_space = SpaceDescriptor(1, spec.truncation[0], spec.truncation[1])
    if state.space != expected_space:
        raise ValueError(
            f"initial state space {state.space} does not match truncation {spec.truncation}"
        )

    segments = []
    diagnostics = {"engine": spec.engine, "regime_failures": failures}
    if spec.engine == "fock":
        for step in spec.steps:
            times, rows, state = _run_fock_step(state, step, samples_per_step)
            segments.append((times, rows))
    else:
        dropped = 0
        for i, step in enumerate(spec.steps):
            arrivals = ArrivalProcess(rate=step.params.r_a, seed=spec.seed + i)
            if step.duration == 0.0:
                sample_times = np.array([0.0])
            else:
                sample_times = np.linspace(0.0, step.duration, samples_per_step)
            traj = run_collision_model(
                state,
                step.params,
                step.duration,
                arrivals,
                include_stark=include_stark,
                sample_times=sample_times,
            )
            rows = [
                {key: traj.records[key][j] for key in traj.records}
                for j in range(traj.times.size)
            ]
            segments.append((traj.times, rows))
            state = traj.final_state
            dropped += traj.diagnostics["dropped_arrivals"]
        diagnostics["dropped_arrivals"] = dropped

    traj = _concatenate(segments)
    traj = Trajectory(
        times=traj.times,
        records=traj.records,
        final_state=state,
        diagnostics=diagnostics,
    )
    return traj, squeezing_report(state, epsilon)

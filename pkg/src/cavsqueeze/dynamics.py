"""Time evolution engines.

Unitary propagation (time-independent and fourth-order time-dependent),
fixed-step Lindblad integration, and the stochastic collision model in which
a Poisson stream of two-level atoms pumps the transformed cavity mode.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
import scipy.linalg

from .analysis import make_observable_recorder, truncation_leak
from .hilbert import DensityMatrix, Operator, SpaceDescriptor
from .model import PhysicalParams, b_mode_annihilation, build_selective_hamiltonian, derive_rates, stark_shifts

HERMITICITY_TOL = 1e-8
STEP_BOUND = 0.05
COUPLING_ERROR_LIMIT = 0.5
COUPLING_WARN_LIMIT = 0.2
ARRIVAL_RATE_LIMIT = 0.2
BOUNDARY_ERROR_LIMIT = 1e-3
MAX_STEPS = 10_000_000

# fourth-order commutator-free two-exponential scheme: Gauss-Legendre nodes
# and the corresponding exponent weights
_CF4_C1 = 0.5 - math.sqrt(3.0) / 6.0
_CF4_C2 = 0.5 + math.sqrt(3.0) / 6.0
_CF4_A1 = (3.0 - 2.0 * math.sqrt(3.0)) / 12.0
_CF4_A2 = (3.0 + 2.0 * math.sqrt(3.0)) / 12.0


@dataclass(frozen=True)
class Trajectory:
    """Sampled time evolution: times, named observable series, optional final state.

    final_state holds whatever state representation the producing engine
    uses (DensityMatrix for Fock engines, GaussianState for the covariance
    engine)."""

    times: np.ndarray
    records: dict
    final_state: Optional[object] = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1:
            raise ValueError("times must be one-dimensional")
        if times.size > 1 and not np.all(np.diff(times) > 0):
            raise ValueError("times must be strictly increasing")
        records = {}
        for key, series in self.records.items():
            arr = np.asarray(series, dtype=float)
            if arr.shape != times.shape:
                raise ValueError(f"record {key!r} has length {arr.shape} != times {times.shape}")
            records[key] = arr
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "records", records)

    def to_csv(self, path) -> None:
        keys = list(self.records)
        with open(path, "w", newline="\n") as fh:
            fh.write(",".join(["t"] + keys) + "\n")
            for i, t in enumerate(self.times):
                row = [t] + [self.records[k][i] for k in keys]
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


@dataclass(frozen=True)
class ArrivalProcess:
    """Poisson atom arrivals at the given rate, reproducible from the seed.

    policy names the overlap rule applied by the collision runner; the only
    supported value is 'drop' (arrivals during an ongoing interaction are
    discarded and counted).  A zero rate means no atoms ever arrive.
    """

    rate: float
    seed: int
    policy: str = "drop"

    def __post_init__(self):
        if not math.isfinite(self.rate) or self.rate < 0.0:
            raise ValueError(f"rate must be finite and nonnegative, got {self.rate!r}")
        if self.policy != "drop":
            raise ValueError(f"unsupported overlap policy {self.policy!r}")

    def sample(self, duration: float) -> np.ndarray:
        """Arrival times in [0, duration), strictly increasing."""
        if duration < 0:
            raise ValueError("duration must be nonnegative")
        if self.rate == 0.0 or duration == 0.0:
            return np.empty(0)
        rng = np.random.default_rng(self.seed)
        # draw in blocks until past the horizon
        times = []
        t = 0.0
        mean = 1.0 / self.rate
        while True:
            block = rng.exponential(mean, size=256)
            for dt in block:
                t += dt
                if t >= duration:
                    return np.array(times)
                times.append(t)


def _require_hermitian(h: Operator) -> np.ndarray:
    defect = np.max(np.abs(h.matrix - h.matrix.conj().T))
    if defect > HERMITICITY_TOL:
        raise ValueError(f"Hamiltonian is not Hermitian (defect {defect:.3e})")
    return h.matrix


def evolve_time_independent(h: Operator, rho0: DensityMatrix, t: float) -> DensityMatrix:
    """Unitary evolution rho -> U rho U+ with U = exp(-i H t)."""
    if h.space != rho0.space:
        raise ValueError("Hamiltonian and state live on different spaces")
    hm = _require_hermitian(h)
    if t == 0.0:
        return rho0
    u = scipy.linalg.expm(-1j * t * hm)
    out = u @ rho0.matrix @ u.conj().T
    return DensityMatrix(rho0.space, 0.5 * (out + out.conj().T))


def _cf4_step(h_of_t, t: float, dt: float) -> np.ndarray:
    h1 = h_of_t(t + _CF4_C1 * dt)
    h2 = h_of_t(t + _CF4_C2 * dt)
    m1 = h1.matrix if isinstance(h1, Operator) else h1
    m2 = h2.matrix if isinstance(h2, Operator) else h2
    first = scipy.linalg.expm(-1j * dt * (_CF4_A2 * m1 + _CF4_A1 * m2))
    second = scipy.linalg.expm(-1j * dt * (_CF4_A1 * m1 + _CF4_A2 * m2))
    return second @ first


def evolve_time_dependent(
    h_of_t: Callable[[float], Operator],
    rho0: DensityMatrix,
    t_span: tuple,
    dt: float,
    max_frequency: Optional[float] = None,
) -> DensityMatrix:
    """Fourth-order propagation under a time-dependent Hamiltonian.

    Uses a commutator-free two-exponential scheme per step.  When the
    caller states the fastest phase in the problem via max_frequency, the
    step is validated against it.
    """
    t0, t1 = float(t_span[0]), float(t_span[1])
    if t1 < t0:
        raise ValueError("t_span must be ordered")
    if dt <= 0:
        raise ValueError("dt must be positive")
    if max_frequency is not None and max_frequency > 0:
        required = STEP_BOUND / max_frequency
        if dt > required:
            raise ValueError(
                f"dt={dt:g} too coarse for the fastest phase {max_frequency:g}; "
                f"need dt <= {required:g}"
            )
    span = t1 - t0
    if span == 0.0:
        return rho0
    n_steps = max(1, math.ceil(span / dt))
    if n_steps > MAX_STEPS:
        raise ValueError(f"span {span:g} at dt {dt:g} needs {n_steps} steps; refusing")
    h = span / n_steps
    u_total = np.eye(rho0.space.dim, dtype=complex)
    t = t0
    for _ in range(n_steps):
        u_total = _cf4_step(h_of_t, t, h) @ u_total
        t += h
    out = u_total @ rho0.matrix @ u_total.conj().T
    return DensityMatrix(rho0.space, 0.5 * (out + out.conj().T))


def propagate_state(
    h_of_t: Union[Operator, Callable[[float], Union[Operator, np.ndarray]]],
    psi0: np.ndarray,
    t_span: tuple,
    dt: float,
) -> np.ndarray:
    """Classical fourth-order Runge-Kutta on a state vector, renormalized
    each step.  Cheap path for pure-state runs on large spaces where the
    density-matrix propagators are too expensive."""
    t0, t1 = float(t_span[0]), float(t_span[1])
    if t1 < t0:
        raise ValueError("t_span must be ordered")
    if dt <= 0:
        raise ValueError("dt must be positive")
    if isinstance(h_of_t, Operator):
        constant = h_of_t.matrix
        h_fn = lambda t: constant
    else:
        def h_fn(t):
            h = h_of_t(t)
            return h.matrix if isinstance(h, Operator) else h
    span = t1 - t0
    psi = np.asarray(psi0, dtype=complex).copy()
    if span == 0.0:
        return psi
    n_steps = max(1, math.ceil(span / dt))
    if n_steps > MAX_STEPS:
        raise ValueError(f"span {span:g} at dt {dt:g} needs {n_steps} steps; refusing")
    h = span / n_steps
    t = t0
    for _ in range(n_steps):
        k1 = -1j * (h_fn(t) @ psi)
        k2 = -1j * (h_fn(t + 0.5 * h) @ (psi + 0.5 * h * k1))
        k3 = -1j * (h_fn(t + 0.5 * h) @ (psi + 0.5 * h * k2))
        k4 = -1j * (h_fn(t + h) @ (psi + h * k3))
        psi = psi + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        psi /= np.linalg.norm(psi)
        t += h
    return psi


def b_mode_jump_operator(s: SpaceDescriptor, epsilon: float, which: int) -> Operator:
    """Transformed-mode annihilation operator used as the pumping jump."""
    if s.atom_levels != 1:
        raise ValueError("jump operators act on the field-only space")
    return b_mode_annihilation(s, epsilon, which)


def _kraus_blocks(u: np.ndarray, atom_levels: int, field_dim: int, atom_in: int):
    col = slice(atom_in * field_dim, (atom_in + 1) * field_dim)
    return [
        np.ascontiguousarray(u[a * field_dim : (a + 1) * field_dim, col])
        for a in range(atom_levels)
    ]


def collision_step(
    rho_c: DensityMatrix,
    atom_init: Union[int, str],
    h_int: Operator,
    tau: float,
    propagator: Optional[np.ndarray] = None,
    coupling_rate: Optional[float] = None,
) -> DensityMatrix:
    """One atom transit: inject the atom, evolve for tau, trace the atom out.

    coupling_rate, when given, is checked against the perturbative regime
    (coupling_rate*tau < 0.5 hard, warn above 0.2).  propagator allows reuse
    of a precomputed exp(-i*h_int*tau).
    """
    if rho_c.space.atom_levels != 1:
        raise ValueError("collision_step expects a field-only cavity state")
    cs = h_int.space
    if (cs.n1_trunc, cs.n2_trunc) != (rho_c.space.n1_trunc, rho_c.space.n2_trunc):
        raise ValueError("field truncations of state and interaction differ")
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    atom_idx = cs.atom_index(atom_init)
    if coupling_rate is not None:
        x = abs(coupling_rate) * tau
        if x >= COUPLING_ERROR_LIMIT:
            raise ValueError(
                f"coupling_rate*tau = {x:.3g} is outside the perturbative regime (< 0.5)"
            )
        if x > COUPLING_WARN_LIMIT:
            warnings.warn(
                f"coupling_rate*tau = {x:.3g} above 0.2; single-collision kicks are large",
                stacklevel=2,
            )
    field_dim = rho_c.space.dim
    if propagator is None:
        propagator = scipy.linalg.expm(-1j * tau * _require_hermitian(h_int))
    elif propagator.shape != (cs.dim, cs.dim):
        raise ValueError("propagator shape does not match the composite space")
    out = np.zeros((field_dim, field_dim), dtype=complex)
    for k in _kraus_blocks(propagator, cs.atom_levels, field_dim, atom_idx):
        out += k @ rho_c.matrix @ k.conj().T
    return DensityMatrix(rho_c.space, 0.5 * (out + out.conj().T))


def _thin_arrivals(times: np.ndarray, tau: float):
    accepted = []
    dropped = 0
    busy_until = -math.inf
    for t in times:
        if t >= busy_until:
            accepted.append(t)
            busy_until = t + tau
        else:
            dropped += 1
    return np.array(accepted), dropped


def run_collision_model(
    rho0: DensityMatrix,
    params: PhysicalParams,
    duration: float,
    arrivals: ArrivalProcess,
    include_stark: bool = False,
    sample_times: Optional[Sequence[float]] = None,
) -> Trajectory:
    """Stochastic single-run collision simulation of the pumping step.

    Atoms arrive as a Poisson stream, each enters in the ground level of the
    selected channel (g for channel b1, h for channel b2), interacts for
    params.tau under the single-channel Hamiltonian, and is discarded.
    Arrivals while an atom is still inside are dropped and counted.  By
    default the light-shift part of the Hamiltonian is absorbed into the
    frame (include_stark=False); setting it true keeps the shifts explicit.

    Records bare and transformed occupations plus joint-quadrature variances
    at sample_times (default: 101 evenly spaced points).
    """
    if rho0.space.atom_levels != 1:
        raise ValueError("collision model expects a field-only initial state")
    if duration < 0:
        raise ValueError("duration must be nonnegative")
    d = derive_rates(params)
    x = d.theta_b * params.tau
    if x >= COUPLING_ERROR_LIMIT:
        raise ValueError(f"theta_b*tau = {x:.3g} is outside the perturbative regime (< 0.5)")
    if x > COUPLING_WARN_LIMIT:
        warnings.warn(f"theta_b*tau = {x:.3g} above 0.2; collision kicks are large", stacklevel=2)
    occupancy = arrivals.rate * params.tau
    if occupancy > ARRIVAL_RATE_LIMIT:
        raise ValueError(
            f"arrival rate violates the one-atom regime: r_a*tau = {occupancy:.3g} > "
            f"{ARRIVAL_RATE_LIMIT}"
        )

    field_space = rho0.space
    composite = SpaceDescriptor(2, field_space.n1_trunc, field_space.n2_trunc)
    stark = stark_shifts(params) if include_stark else None
    h_int = build_selective_hamiltonian(d, stark, composite)
    atom_init = "g" if d.channel == "b1" else "h"
    atom_idx = composite.atom_index(atom_init)
    propagator = scipy.linalg.expm(-1j * params.tau * h_int.matrix)
    kraus = _kraus_blocks(propagator, 2, field_space.dim, atom_idx)

    if sample_times is None:
        sample_times = np.linspace(0.0, duration, 101)
    else:
        sample_times = np.asarray(sample_times, dtype=float)

    accepted, dropped = _thin_arrivals(arrivals.sample(duration), params.tau)
    recorder = make_observable_recorder(field_space, d.epsilon)

    rho = rho0.matrix.copy()
    rows = []
    max_leak = 0.0
    arrival_ptr = 0
    for t_s in sample_times:
        while arrival_ptr < accepted.size and accepted[arrival_ptr] <= t_s:
            new = np.zeros_like(rho)
            for k in kraus:
                new += k @ rho @ k.conj().T
            rho = new
            arrival_ptr += 1
        leak = truncation_leak(rho, field_space)
        max_leak = max(max_leak, leak)
        if leak > BOUNDARY_ERROR_LIMIT:
            raise RuntimeError(
                f"truncation overflow at t={t_s:g}: boundary population {leak:.2e} > "
                f"{BOUNDARY_ERROR_LIMIT:g}; increase the Fock truncation"
            )
        rows.append(recorder(rho))
    while arrival_ptr < accepted.size:
        new = np.zeros_like(rho)
        for k in kraus:
            new += k @ rho @ k.conj().T
        rho = new
        arrival_ptr += 1

    records = {key: np.array([row[key] for row in rows]) for key in rows[0]} if rows else {}
    final = DensityMatrix(field_space, 0.5 * (rho + rho.conj().T))
    return Trajectory(
        times=np.asarray(sample_times, dtype=float),
        records=records,
        final_state=final,
        diagnostics={
            "accepted_arrivals": int(accepted.size),
            "dropped_arrivals": int(dropped),
            "max_truncation_leak": float(max_leak),
            "channel": d.channel,
            "atom_state": atom_init,
            "seed": arrivals.seed,
        },
    )


def _worker_count(requested: Optional[int]) -> int:
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get("CAVSQUEEZE_WORKERS", "").strip()
    if env:
        return max(1, int(env))
    return min(4, os.cpu_count() or 1)


def run_collision_ensemble(
    rho0: DensityMatrix,
    params: PhysicalParams,
    duration: float,
    n_trajectories: int,
    master_seed: int,
    include_stark: bool = False,
    sample_times: Optional[Sequence[float]] = None,
    workers: Optional[int] = None,
) -> Trajectory:
    """Average of independent collision runs.

    Trajectory i uses seed master_seed XOR i, so the ensemble is
    reproducible and independent of the worker count.  Records are the
    ensemble means; the final state is the averaged density matrix.
    """
    if n_trajectories < 1:
        raise ValueError("n_trajectories must be at least 1")
    if sample_times is None:
        sample_times = np.linspace(0.0, duration, 101)

    def one(i: int) -> Trajectory:
        proc = ArrivalProcess(rate=params.r_a, seed=master_seed ^ i, policy="drop")
        return run_collision_model(
            rho0, params, duration, proc,
            include_stark=include_stark, sample_times=sample_times,
        )

    n_workers = _worker_count(workers)
    results = [None] * n_trajectories
    if n_workers == 1:
        for i in range(n_trajectories):
            results[i] = one(i)
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            for i, traj in enumerate(pool.map(one, range(n_trajectories))):
                results[i] = traj

    keys = list(results[0].records)
    records = {
        key: np.mean([results[i].records[key] for i in range(n_trajectories)], axis=0)
        for key in keys
    }
    mean_final = np.mean([r.final_state.matrix for r in results], axis=0)
    diagnostics = {
        "n_trajectories": n_trajectories,
        "accepted_arrivals": sum(r.diagnostics["accepted_arrivals"] for r in results),
        "dropped_arrivals": sum(r.diagnostics["dropped_arrivals"] for r in results),
        "max_truncation_leak": max(r.diagnostics["max_truncation_leak"] for r in results),
        "channel": results[0].diagnostics["channel"],
        "master_seed": master_seed,
    }
    return Trajectory(
        times=np.asarray(sample_times, dtype=float),
        records=records,
        final_state=DensityMatrix(rho0.space, mean_final),
        diagnostics=diagnostics,
    )


def lindblad_evolve(
    rho0: DensityMatrix,
    jumps: Sequence[tuple],
    t_span: tuple,
    dt: Optional[float] = None,
    hamiltonian: Optional[Operator] = None,
    record: Optional[Callable] = None,
    sample_times: Optional[Sequence[float]] = None,
) -> Trajectory:
    """Fixed-step fourth-order integration of the master equation
    drho/dt = -i[H, rho] + sum_k gamma_k (L rho L+ - {L+L, rho}/2).

    jumps is a list of (Operator, rate) pairs.  When dt is omitted a stable
    step is chosen from the spectral scale of the generator; an explicit dt
    is validated against the fastest rate in the problem.  Trace drift
    beyond 1e-8 is renormalized and counted in diagnostics; populations are
    monitored for negativity.
    """
    t0, t1 = float(t_span[0]), float(t_span[1])
    if t1 < t0:
        raise ValueError("t_span must be ordered")
    space = rho0.space
    ops = []
    for op, rate in jumps:
        if rate < 0:
            raise ValueError("jump rates must be nonnegative")
        if op.space != space:
            raise ValueError("jump operator space does not match the state")
        ops.append((op.matrix, float(rate)))
    hm = None
    h_norm = 0.0
    if hamiltonian is not None:
        if hamiltonian.space != space:
            raise ValueError("Hamiltonian space does not match the state")
        hm = _require_hermitian(hamiltonian)
        h_norm = float(np.max(np.abs(np.linalg.eigvalsh(hm)))) if hm.size else 0.0

    # stiffness estimate: Hamiltonian spectral radius plus summed damping scales
    damping = 0.0
    for lm, rate in ops:
        if rate > 0.0:
            gram = lm.conj().T @ lm
            damping += rate * float(np.max(np.linalg.eigvalsh(0.5 * (gram + gram.conj().T))))
    stiffness = 2.0 * h_norm + damping

    span = t1 - t0
    if dt is None:
        dt = span if stiffness == 0.0 else min(span if span > 0 else 1.0, 0.2 / stiffness)
    else:
        fastest = max([rate for _, rate in ops] + [h_norm] + [0.0])
        if fastest > 0 and dt * fastest > STEP_BOUND:
            raise ValueError(
                f"step-size violation: dt*max(rate, |H|) = {dt * fastest:.3g} > {STEP_BOUND}"
            )
        if stiffness > 0 and dt > 1.0 / stiffness:
            warnings.warn(
                f"dt={dt:g} is close to the stability limit 2.8/{stiffness:.3g}",
                stacklevel=2,
            )
    if sample_times is None:
        sample_times = np.linspace(t0, t1, 101) if span > 0 else np.array([t0])
    else:
        sample_times = np.asarray(sample_times, dtype=float)
    if sample_times.size and (sample_times[0] < t0 - 1e-12 or sample_times[-1] > t1 + 1e-12):
        raise ValueError("sample_times must lie within t_span")

    # effective non-Hermitian drift G = -iH - sum gamma/2 L+L
    g_drift = np.zeros((space.dim, space.dim), dtype=complex)
    if hm is not None:
        g_drift += -1j * hm
    jump_ops = []
    for lm, rate in ops:
        if rate == 0.0:
            continue
        g_drift -= 0.5 * rate * (lm.conj().T @ lm)
        jump_ops.append(math.sqrt(rate) * lm)

    def rhs(rho):
        out = g_drift @ rho
        out = out + out.conj().T
        for lm in jump_ops:
            out += (lm @ rho) @ lm.conj().T
        return out

    renormalizations = 0
    total_steps = 0

    def advance(rho, span_seg):
        nonlocal renormalizations, total_steps
        if span_seg <= 0:
            return rho
        n_seg = max(1, math.ceil(span_seg / dt))
        total_steps += n_seg
        if total_steps > MAX_STEPS:
            raise ValueError(f"integration needs more than {MAX_STEPS} steps; refusing")
        h = span_seg / n_seg
        for _ in range(n_seg):
            k1 = rhs(rho)
            k2 = rhs(rho + 0.5 * h * k1)
            k3 = rhs(rho + 0.5 * h * k2)
            k4 = rhs(rho + h * k3)
            rho = rho + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            tr = float(np.trace(rho).real)
            if abs(tr - 1.0) > 1e-8:
                rho /= tr
                renormalizations += 1
        return rho

    rho = rho0.matrix.copy()
    rows = []
    min_population = math.inf
    t_cur = t0
    for t_target in sample_times:
        rho = advance(rho, float(t_target) - t_cur)
        t_cur = float(t_target)
        min_population = min(min_population, float(np.diag(rho).real.min()))
        rows.append(record(rho) if record is not None else {})
    rho = advance(rho, t1 - t_cur)

    records = {key: np.array([row[key] for row in rows]) for key in rows[0]} if rows and rows[0] else {}
    rho = 0.5 * (rho + rho.conj().T)
    rho /= np.trace(rho).real
    final = DensityMatrix(space, rho)
    return Trajectory(
        times=sample_times,
        records=records,
        final_state=final,
        diagnostics={
            "dt": float(dt),
            "steps": int(total_steps),
            "trace_renormalizations": int(renormalizations),
            "min_population": float(min_population),
        },
    )

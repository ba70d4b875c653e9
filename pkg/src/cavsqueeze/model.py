"""Physical model of the two-channel Raman scheme.

Builds the driven three-level Hamiltonian, its dispersive (adiabatically
eliminated) two-level form, the single-channel form in the Bogoliubov mode
basis, the squeeze and displacement unitaries, and the derived coupling and
dissipation rates.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .hilbert import (
    Operator,
    SpaceDescriptor,
    annihilation_op,
    atom_transition_op,
    matrix_exponential,
    number_op,
)

TWO_PI = 2.0 * math.pi

DISPERSIVE_LIMIT = 0.1
SQUEEZE_LEAK_LIMIT = 1e-3

_HZ_KEYS = {
    "omega1_hz": "omega1",
    "omega2_hz": "omega2",
    "g1_hz": "g1",
    "g2_hz": "g2",
    "delta1_hz": "delta1",
    "delta2_hz": "delta2",
    "gamma_e_hz": "gamma_e",
}


@dataclass(frozen=True)
class PhysicalParams:
    """Lab-frame inputs.  All frequencies are angular (rad/s).

    omega1, omega2 are classical-drive Rabi frequencies; g1, g2 the cavity
    couplings; delta1, delta2 the signed one-photon detunings of the two
    Raman channels; gamma_e the excited-state linewidth; r_a the atomic
    arrival rate in atoms per second; tau the single-atom transit time in
    seconds.
    """

    omega1: float
    omega2: float
    g1: float
    g2: float
    delta1: float
    delta2: float
    gamma_e: float = 0.0
    r_a: float = 0.0
    tau: float = 0.0

    def __post_init__(self):
        for name in ("omega1", "omega2", "g1", "g2", "delta1", "delta2", "gamma_e", "r_a", "tau"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.delta1 == 0.0:
            raise ValueError("delta1 must be nonzero")
        if self.delta2 == 0.0:
            raise ValueError("delta2 must be nonzero")
        if self.delta1 == self.delta2:
            raise ValueError("delta1 and delta2 must differ: equal detunings collapse the two Raman channels")
        if self.gamma_e < 0.0:
            raise ValueError("gamma_e must be nonnegative")
        if self.r_a < 0.0:
            raise ValueError("r_a must be nonnegative")
        if self.tau < 0.0:
            raise ValueError("tau must be nonnegative")

    @property
    def dispersive_ratio(self) -> float:
        """max coupling over min detuning scale; small values justify elimination of the excited state."""
        num = max(abs(self.omega1), abs(self.omega2), abs(self.g1), abs(self.g2))
        den = min(abs(self.delta1), abs(self.delta2), abs(self.delta1 - self.delta2))
        return num / den

    @property
    def is_dispersive(self) -> bool:
        return self.dispersive_ratio <= DISPERSIVE_LIMIT

    @classmethod
    def from_hz_dict(cls, data: dict) -> "PhysicalParams":
        """Build from a parameter mapping in linear-frequency units.

        Keys omega1_hz .. gamma_e_hz are in Hz and converted to rad/s;
        r_a_hz is an event rate in 1/s (no conversion); tau_s is in seconds.
        """
        known = set(_HZ_KEYS) | {"r_a_hz", "tau_s"}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown parameter keys {sorted(unknown)}")
        kwargs = {field: TWO_PI * float(data[key]) for key, field in _HZ_KEYS.items() if key in data}
        missing = [k for k in ("omega1_hz", "omega2_hz", "g1_hz", "g2_hz", "delta1_hz", "delta2_hz") if k not in data]
        if missing:
            raise ValueError(f"missing parameter keys {missing}")
        kwargs["r_a"] = float(data.get("r_a_hz", 0.0))
        kwargs["tau"] = float(data.get("tau_s", 0.0))
        return cls(**kwargs)

    def to_hz_dict(self) -> dict:
        out = {key: getattr(self, field) / TWO_PI for key, field in _HZ_KEYS.items()}
        out["r_a_hz"] = self.r_a
        out["tau_s"] = self.tau
        return out


@dataclass(frozen=True)
class DerivedParams:
    """Two-photon rates and the Bogoliubov-channel quantities they fix.

    channel is 'b1' when theta1 > theta2 (transformed mode 1 couples) and
    'b2' when theta1 < theta2.  gamma is the pumping rate of the coupled
    transformed mode, r_a * theta_b**2 * tau**2.
    """

    theta1: float
    theta2: float
    r: float
    epsilon: float
    theta_b: float
    gamma: float
    channel: str


def derive_rates(p: PhysicalParams) -> DerivedParams:
    """Two-photon Raman rates and the squeeze/dissipation parameters they imply."""
    theta1 = abs(p.omega1 * p.g1 / p.delta1)
    theta2 = abs(p.omega2 * p.g2 / p.delta2)
    if theta1 == theta2:
        raise ValueError("degenerate channel: r = 1, epsilon diverges")
    r = min(theta1, theta2) / max(theta1, theta2)
    epsilon = math.atanh(r)
    theta_b = (theta1 + theta2) * math.sqrt((1.0 - r) / (1.0 + r))
    gamma = p.r_a * theta_b**2 * p.tau**2
    channel = "b1" if theta1 > theta2 else "b2"
    return DerivedParams(
        theta1=theta1,
        theta2=theta2,
        r=r,
        epsilon=epsilon,
        theta_b=theta_b,
        gamma=gamma,
        channel=channel,
    )


@dataclass(frozen=True)
class StarkShifts:
    """Magnitudes of the dispersive light shifts (all nonnegative, rad/s).

    shift_g is the drive-2 shift of level g, shift_h the drive-1 shift of
    level h; per_photon_1 and per_photon_2 are the cavity shifts per photon
    of modes 1 and 2 on levels g and h respectively.  Signs follow the
    sign convention delta1 < 0 < delta2, under which the drive shift enters
    with + on g and - on h, and the photon shifts with - on g and + on h.
    """

    shift_g: float
    shift_h: float
    per_photon_1: float
    per_photon_2: float


def stark_shifts(p: PhysicalParams) -> StarkShifts:
    return StarkShifts(
        shift_g=abs(p.omega2**2 / p.delta2),
        shift_h=abs(p.omega1**2 / p.delta1),
        per_photon_1=abs(p.g1**2 / p.delta1),
        per_photon_2=abs(p.g2**2 / p.delta2),
    )


def build_full_hamiltonian(p: PhysicalParams, s: SpaceDescriptor, t: float) -> Operator:
    """Interaction-picture Hamiltonian of the driven three-level atom at time t.

    Channel 1 couples drive 1 (h <-> e) with cavity mode 1 (g <-> e) at
    detuning delta1; channel 2 couples drive 2 (g <-> e) with cavity mode 2
    (h <-> e) at detuning delta2.  Raising terms carry e^{-i delta t}; this
    sign pairs with the +omega^2/delta shift convention of
    build_effective_hamiltonian, so the second-order reduction of this
    Hamiltonian is that one (checked dynamically in the tests).
    """
    if s.atom_levels != 3:
        raise ValueError(f"full model needs 3 atom levels, space has {s.atom_levels}")
    a1 = annihilation_op(s, 1).matrix
    a2 = annihilation_op(s, 2).matrix
    s_eh = atom_transition_op(s, "e", "h").matrix
    s_eg = atom_transition_op(s, "e", "g").matrix
    phase1 = np.exp(-1j * p.delta1 * t)
    phase2 = np.exp(-1j * p.delta2 * t)
    half = (
        p.omega1 * phase1 * s_eh
        + p.omega2 * phase2 * s_eg
        + p.g1 * phase1 * (a1 @ s_eg)
        + p.g2 * phase2 * (a2 @ s_eh)
    )
    return Operator(s, half + half.conj().T)


def build_effective_hamiltonian(p: PhysicalParams, s: SpaceDescriptor) -> Operator:
    """Dispersive two-level Hamiltonian after elimination of the excited state.

    Diagonal light shifts on g and h plus the two two-photon flip terms,
    with signed detunings entering exactly as given.
    """
    if s.atom_levels < 2:
        raise ValueError("effective model needs at least the two ground levels g, h")
    n1 = number_op(s, 1).matrix
    n2 = number_op(s, 2).matrix
    a1 = annihilation_op(s, 1).matrix
    a2 = annihilation_op(s, 2).matrix
    p_gg = atom_transition_op(s, "g", "g").matrix
    p_hh = atom_transition_op(s, "h", "h").matrix
    s_gh = atom_transition_op(s, "g", "h").matrix
    eye = np.eye(s.dim)

    diag_h = (p.omega1**2 / p.delta1) * eye + (p.g2**2 / p.delta2) * n2
    diag_g = (p.omega2**2 / p.delta2) * eye + (p.g1**2 / p.delta1) * n1
    flip = (p.omega1 * p.g1 / p.delta1) * a1.conj().T + (p.omega2 * p.g2 / p.delta2) * a2
    m = diag_h @ p_hh + diag_g @ p_gg + flip @ s_gh + (flip @ s_gh).conj().T
    return Operator(s, m)


def _stark_diagonal(stark: StarkShifts, n1_like: np.ndarray, n2_like: np.ndarray, s: SpaceDescriptor) -> np.ndarray:
    """Light-shift Hamiltonian with the given number operators substituted in."""
    p_gg = atom_transition_op(s, "g", "g").matrix
    p_hh = atom_transition_op(s, "h", "h").matrix
    eye = np.eye(s.dim)
    diag_h = stark.per_photon_2 * n2_like - stark.shift_h * eye
    diag_g = stark.shift_g * eye - stark.per_photon_1 * n1_like
    return diag_h @ p_hh + diag_g @ p_gg


def effective_hamiltonian_rate_form(d: DerivedParams, stark: StarkShifts, s: SpaceDescriptor) -> Operator:
    """The dispersive Hamiltonian regrouped as light shifts plus a two-mode flip term.

    Equals build_effective_hamiltonian exactly for real nonnegative couplings
    with delta1 < 0 < delta2.
    """
    a1 = annihilation_op(s, 1).matrix
    a2 = annihilation_op(s, 2).matrix
    n1 = number_op(s, 1).matrix
    n2 = number_op(s, 2).matrix
    s_hg = atom_transition_op(s, "h", "g").matrix
    flip = (d.theta2 * a2.conj().T - d.theta1 * a1) @ s_hg
    m = _stark_diagonal(stark, n1, n2, s) + flip + flip.conj().T
    return Operator(s, m)


def build_squeeze_operator(s: SpaceDescriptor, epsilon: float) -> Operator:
    """Two-mode squeeze unitary exp(epsilon*(a1 a2 - a1+ a2+)) on the truncated space.

    The generator is anti-Hermitian even after truncation, so the result is
    always unitary; what truncation does break is the action on states near
    the photon-number cutoff.  The leak of the transformed vacuum past an
    N-photon cutoff is tanh(epsilon)**(2N), and construction is refused when
    that exceeds 1e-3.
    """
    if not math.isfinite(epsilon):
        raise ValueError("epsilon must be finite")
    n_min = min(s.n1_trunc, s.n2_trunc)
    t = abs(math.tanh(epsilon))
    leak = t ** (2 * n_min)
    if leak > SQUEEZE_LEAK_LIMIT:
        suggested = math.ceil(math.log(SQUEEZE_LEAK_LIMIT) / (2.0 * math.log(t)))
        raise ValueError(
            f"truncation {n_min} too small for epsilon={epsilon:.4g}: "
            f"vacuum leak {leak:.2e} exceeds {SQUEEZE_LEAK_LIMIT:g}; "
            f"use at least {suggested} Fock states per mode"
        )
    a1 = annihilation_op(s, 1)
    a2 = annihilation_op(s, 2)
    gen = a1 @ a2 - a1.dagger() @ a2.dagger()
    return matrix_exponential(epsilon * gen)


def b_mode_annihilation(s: SpaceDescriptor, epsilon: float, mode: int) -> Operator:
    """Annihilation operator of transformed (squeezed-basis) mode 1 or 2.

    Built by conjugating the bare operator with the squeeze unitary on the
    field factors; on interior Fock states this equals
    cosh(epsilon)*a_j - sinh(epsilon)*a_k+ with k the other mode.
    """
    fields = SpaceDescriptor(1, s.n1_trunc, s.n2_trunc)
    sq = build_squeeze_operator(fields, epsilon)
    a = annihilation_op(fields, mode)
    b = sq.dagger() @ a @ sq
    if s.atom_levels == 1:
        return Operator(s, b.matrix)
    return Operator(s, np.kron(np.eye(s.atom_levels), b.matrix))


def build_selective_hamiltonian(
    d: DerivedParams, stark: Optional[StarkShifts], s: SpaceDescriptor
) -> Operator:
    """Single-channel Hamiltonian in the transformed mode basis.

    The flip term couples the effective two-level atom to exactly one
    transformed mode: -theta_b*(b1 sigma_hg + b1+ sigma_gh) on channel b1,
    +theta_b*(b2+ sigma_hg + b2 sigma_gh) on channel b2.  When stark is
    given, the light shifts are added with their number operators taken in
    the transformed basis, minus the constant energy of the pumping target
    sector, so the target state (atom g with transformed vacuum on channel
    b1, atom h on channel b2) is a zero-energy eigenstate.
    """
    if s.atom_levels < 2:
        raise ValueError("selective model needs at least the two ground levels g, h")
    b1 = b_mode_annihilation(s, d.epsilon, 1)
    b2 = b_mode_annihilation(s, d.epsilon, 2)
    s_hg = atom_transition_op(s, "h", "g")
    s_gh = atom_transition_op(s, "g", "h")
    if d.channel == "b1":
        h1 = -d.theta_b * (b1 @ s_hg + b1.dagger() @ s_gh)
    else:
        h1 = d.theta_b * (b2.dagger() @ s_hg + b2 @ s_gh)
    if stark is None:
        return h1
    nb1 = (b1.dagger() @ b1).matrix
    nb2 = (b2.dagger() @ b2).matrix
    h0 = _stark_diagonal(stark, nb1, nb2, s)
    dark_energy = stark.shift_g if d.channel == "b1" else -stark.shift_h
    h0 = h0 - dark_energy * np.eye(s.dim)
    return Operator(s, h0 + h1.matrix)


def build_displacement_operator(s: SpaceDescriptor, alpha1: complex, alpha2: complex) -> Operator:
    """Product of coherent displacements exp(alpha_j a_j+ - alpha_j* a_j) on both modes."""
    alpha1 = complex(alpha1)
    alpha2 = complex(alpha2)
    if not all(math.isfinite(v) for v in (alpha1.real, alpha1.imag, alpha2.real, alpha2.imag)):
        raise ValueError("displacement amplitudes must be finite")
    if abs(alpha1) ** 2 > s.n1_trunc / 4 or abs(alpha2) ** 2 > s.n2_trunc / 4:
        warnings.warn(
            "displacement amplitude large for the truncation (|alpha|^2 > N/4); "
            "distribution tails will be clipped",
            stacklevel=2,
        )
    a1 = annihilation_op(s, 1)
    a2 = annihilation_op(s, 2)
    gen = (
        alpha1 * a1.dagger() - np.conj(alpha1) * a1
        + alpha2 * a2.dagger() - np.conj(alpha2) * a2
    )
    return matrix_exponential(gen)


@dataclass(frozen=True)
class DecayEstimate:
    """Excited-state admixture of the drive-1 channel and the decay rate it implies."""

    occupation: float
    rate: float


def spontaneous_decay_estimate(p: PhysicalParams) -> DecayEstimate:
    """Effective spontaneous-emission rate from off-resonant excited-state occupation."""
    occupation = abs(p.omega1 / p.delta1) ** 2
    return DecayEstimate(occupation=occupation, rate=occupation * p.gamma_e)

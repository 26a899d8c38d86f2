"""Two-way full-duplex pilot exchange through a passive reflecting surface.

A ground terminal and a base station transmit pilot bursts at the same time
on the same band.  Neither end has a direct path to the other; both are
served by a surface of ``n_elements`` passive reflectors, so each receiver
observes the remote pilot through the element-wise cascade of both hops plus
its own pilot bounced back over its own hop twice (self-interference),
hardware distortion, and thermal noise.

Every stochastic quantity is drawn from an explicit ``numpy.random.Generator``
passed by the caller; nothing in this module touches global random state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# x^4 + x^2 + 1: reducible over GF(2), sequence period 6 for any nonzero seed.
DEFAULT_POLYNOMIAL = 0b10101
# x^4 + x + 1: primitive alternative, maximal period 15.
PRIMITIVE_POLYNOMIAL_DEG4 = 0b10011

# Above this Rician K the scattered part is dropped entirely and the draw is
# the deterministic line-of-sight phasor.
PURE_LOS_K = 1.0e6


@dataclass(frozen=True)
class PilotSequence:
    """BPSK pilot burst produced by a binary linear-feedback shift register."""

    symbols: np.ndarray
    bits: np.ndarray
    polynomial: int
    seed: int

    def __len__(self) -> int:
        return len(self.symbols)


@dataclass(frozen=True)
class ChannelRealization:
    """One joint draw of the two hops, shared by both link directions.

    ``terminal_link[n]`` connects the terminal to surface element ``n`` and
    ``station_link[n]`` connects element ``n`` to the station.  Both
    directions of the exchange reuse the same coefficients (reciprocity).
    """

    terminal_link: np.ndarray
    station_link: np.ndarray
    k_factor: float

    def __post_init__(self) -> None:
        if self.terminal_link.shape != self.station_link.shape or self.terminal_link.ndim != 1:
            raise ValueError("terminal_link and station_link must be 1-D of equal length")

    @property
    def n_elements(self) -> int:
        return len(self.terminal_link)

    @classmethod
    def sample(
        cls,
        n_elements: int,
        k_factor: float,
        rng: np.random.Generator,
        los_phase: float | np.ndarray = 0.0,
    ) -> "ChannelRealization":
        """Draw both hops independently; terminal side first, then station side."""
        terminal = sample_rician_channel(n_elements, k_factor, rng, los_phase)
        station = sample_rician_channel(n_elements, k_factor, rng, los_phase)
        return cls(terminal_link=terminal, station_link=station, k_factor=k_factor)


@dataclass(frozen=True)
class RisConfig:
    """Reflection state of the surface: per-element gain and phase.

    The effective diagonal response of element ``n`` is
    ``amplitude_gain * (1 - switching_error) * exp(1j * phase_shifts[n])``.
    ``switching_error`` models imperfect element switching as a uniform
    amplitude loss.
    """

    n_elements: int
    amplitude_gain: float = 1.0
    phase_shifts: np.ndarray | None = None
    switching_error: float = 0.0

    def __post_init__(self) -> None:
        if self.n_elements < 1:
            raise ValueError("n_elements must be positive")
        if not 0.0 < self.amplitude_gain <= 1.0:
            raise ValueError("amplitude_gain must lie in (0, 1]")
        if not 0.0 <= self.switching_error <= 1.0:
            raise ValueError("switching_error must lie in [0, 1]")
        if self.phase_shifts is None:
            object.__setattr__(self, "phase_shifts", np.zeros(self.n_elements))
        elif np.shape(self.phase_shifts) != (self.n_elements,):
            raise ValueError("phase_shifts must have shape (n_elements,)")

    def diagonal(self) -> np.ndarray:
        """Complex diagonal of the surface response, length ``n_elements``."""
        gain = self.amplitude_gain * (1.0 - self.switching_error)
        return gain * np.exp(1j * np.asarray(self.phase_shifts, dtype=float))


@dataclass(frozen=True)
class NoiseParams:
    """Impairment powers at each receiver.

    With ``snr_db`` set, the hardware-distortion and thermal variances are
    calibrated per realization: the total impairment power is the desired
    term's mean symbol power divided by the linear SNR, split equally between
    the two sources.  With ``snr_db=None`` the explicit variances are used
    as given; both zero is the noiseless configuration.
    """

    snr_db: float | None = None
    sigma_e_sq: float = 0.0
    sigma_w_sq: float = 0.0

    def __post_init__(self) -> None:
        if self.sigma_e_sq < 0.0 or self.sigma_w_sq < 0.0:
            raise ValueError("noise variances must be nonnegative")
        if self.snr_db is not None and not np.isfinite(self.snr_db):
            raise ValueError("snr_db must be finite; use snr_db=None for fixed variances")

    @classmethod
    def for_snr(cls, snr_db: float) -> "NoiseParams":
        return cls(snr_db=float(snr_db))

    @classmethod
    def noiseless(cls) -> "NoiseParams":
        return cls(snr_db=None, sigma_e_sq=0.0, sigma_w_sq=0.0)


@dataclass(frozen=True)
class BurstComponents:
    """Additive breakdown of one received burst, for diagnostics."""

    desired: np.ndarray
    self_interference: np.ndarray
    distortion: np.ndarray
    thermal: np.ndarray

    def total(self) -> np.ndarray:
        return self.desired + self.self_interference + self.distortion + self.thermal


@dataclass(frozen=True)
class ReceivedPilots:
    """Both receivers' observations of one simultaneous pilot exchange."""

    at_terminal: np.ndarray
    at_station: np.ndarray
    terminal_parts: BurstComponents = field(repr=False)
    station_parts: BurstComponents = field(repr=False)


def gen_pn_sequence(
    length: int,
    polynomial: int = DEFAULT_POLYNOMIAL,
    seed: int = 0b0001,
) -> PilotSequence:
    """Run a Fibonacci LFSR and map its bits to BPSK pilot symbols.

    Parameters
    ----------
    length : int
        Number of pilot symbols to emit.  Lengths beyond the register period
        continue the recurrence, which repeats the sequence cyclically.
    polynomial : int
        Feedback polynomial over GF(2) as a bit mask; bit ``i`` is the
        coefficient of x^i and the leading bit fixes the register degree.
        For the default x^4 + x^2 + 1 the recurrence is
        ``s[k] = s[k-2] XOR s[k-4]``.
    seed : int
        Initial register contents; bit ``i`` of the integer is ``s[i]``.
        Must be nonzero and fit in the register.

    Returns
    -------
    PilotSequence
        Bits and BPSK symbols, mapped as ``bit b -> 1 - 2b`` (0 -> +1, 1 -> -1).
    """
    if length < 1:
        raise ValueError("length must be positive")
    degree = polynomial.bit_length() - 1
    if degree < 1 or not polynomial & 1:
        raise ValueError("polynomial must have degree >= 1 and a constant term")
    if seed <= 0 or seed >= 1 << degree:
        raise ValueError(f"seed must be a nonzero {degree}-bit register value")

    # Tap offsets: the x^i term (i < degree) feeds back the bit emitted
    # (degree - i) steps ago.
    offsets = [degree - i for i in range(degree) if polynomial >> i & 1]
    bits = [(seed >> i) & 1 for i in range(degree)]
    while len(bits) < length:
        nxt = 0
        for off in offsets:
            nxt ^= bits[len(bits) - off]
        bits.append(nxt)
    bits_arr = np.array(bits[:length], dtype=np.uint8)
    symbols = (1.0 - 2.0 * bits_arr).astype(np.complex128)
    return PilotSequence(symbols=symbols, bits=bits_arr, polynomial=polynomial, seed=seed)


def sample_rician_channel(
    n_elements: int,
    k_factor: float,
    rng: np.random.Generator,
    los_phase: float | np.ndarray = 0.0,
) -> np.ndarray:
    """Draw ``n_elements`` unit-mean-power Rician fading coefficients.

    Each coefficient is ``sqrt(K/(K+1)) * exp(1j*los_phase)`` plus
    ``sqrt(1/(K+1))`` times a standard circular complex Gaussian.  K is the
    linear power ratio of the deterministic part to the scattered part;
    K = 0 degenerates to Rayleigh fading and K >= PURE_LOS_K returns the
    deterministic phasor with no scattered part at all.
    """
    if n_elements < 1:
        raise ValueError("n_elements must be positive")
    if k_factor < 0.0:
        raise ValueError("k_factor must be nonnegative")
    los = np.exp(1j * np.broadcast_to(np.asarray(los_phase, dtype=float), (n_elements,)))
    if k_factor >= PURE_LOS_K:
        return los.astype(np.complex128)
    scatter = np.sqrt(0.5) * (rng.standard_normal(n_elements) + 1j * rng.standard_normal(n_elements))
    return np.sqrt(k_factor / (k_factor + 1.0)) * los + np.sqrt(1.0 / (k_factor + 1.0)) * scatter


def ris_phase_matrix(config: RisConfig) -> np.ndarray:
    """Dense diagonal response matrix of the surface."""
    return np.diag(config.diagonal())


def synthesize_received_pilots(
    channel: ChannelRealization,
    ris: RisConfig,
    s1: PilotSequence,
    s2: PilotSequence,
    p1: float,
    p2: float,
    noise: NoiseParams,
    rng: np.random.Generator,
) -> ReceivedPilots:
    """Simulate one simultaneous pilot exchange over a fixed surface state.

    The terminal transmits ``s1`` at power ``p1`` while the station transmits
    ``s2`` at power ``p2``.  The terminal observes

    ``y[m] = sqrt(p2) * c_x * s2[m] + sqrt(p1) * c_t * s1[m] + e[m] + w[m]``

    where ``c_x`` is the through cascade (station link, surface, terminal
    link), ``c_t`` the terminal's round trip over its own link twice, ``e``
    hardware distortion and ``w`` thermal noise.  The station observation is
    symmetric with ``c_s``, its own round trip.  Impairments are drawn in the
    fixed order e-terminal, w-terminal, e-station, w-station so equal seeds
    give equal bursts.

    When ``noise.snr_db`` is set, each receiver's total impairment power is
    calibrated to ``mean |desired|^2 / 10**(snr_db/10)`` for this realization
    and split equally between distortion and thermal parts.
    """
    if len(s1) != len(s2):
        raise ValueError("pilot bursts must have equal length")
    if channel.n_elements != ris.n_elements:
        raise ValueError("channel and surface sizes disagree")
    if p1 < 0.0 or p2 < 0.0:
        raise ValueError("transmit powers must be nonnegative")

    diag = ris.diagonal()
    h = channel.terminal_link
    g = channel.station_link
    through = np.sum(g * diag * h)
    terminal_round_trip = np.sum(h * diag * h)
    station_round_trip = np.sum(g * diag * g)

    desired_t = np.sqrt(p2) * through * s2.symbols
    self_t = np.sqrt(p1) * terminal_round_trip * s1.symbols
    desired_s = np.sqrt(p1) * through * s1.symbols
    self_s = np.sqrt(p2) * station_round_trip * s2.symbols

    m = len(s1)
    e_t, w_t = _draw_impairments(desired_t, noise, m, rng)
    e_s, w_s = _draw_impairments(desired_s, noise, m, rng)

    terminal_parts = BurstComponents(desired_t, self_t, e_t, w_t)
    station_parts = BurstComponents(desired_s, self_s, e_s, w_s)
    return ReceivedPilots(
        at_terminal=terminal_parts.total(),
        at_station=station_parts.total(),
        terminal_parts=terminal_parts,
        station_parts=station_parts,
    )


def _draw_impairments(
    desired: np.ndarray,
    noise: NoiseParams,
    m: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    if noise.snr_db is None:
        sigma_e_sq, sigma_w_sq = noise.sigma_e_sq, noise.sigma_w_sq
    else:
        power_in = np.mean(np.abs(desired) ** 2) / 10.0 ** (noise.snr_db / 10.0)
        sigma_e_sq = sigma_w_sq = power_in / 2.0
    e = np.sqrt(sigma_e_sq / 2.0) * (rng.standard_normal(m) + 1j * rng.standard_normal(m))
    w = np.sqrt(sigma_w_sq / 2.0) * (rng.standard_normal(m) + 1j * rng.standard_normal(m))
    return e, w


def instantaneous_snr(
    desired: np.ndarray,
    interference: np.ndarray,
    noise: np.ndarray,
) -> np.ndarray:
    """Per-symbol power ratio |desired|^2 / (|interference|^2 + |noise|^2).

    Symbols whose impairment power is exactly zero report ``inf`` rather
    than raising.
    """
    desired = np.asarray(desired)
    num = np.abs(desired) ** 2
    den = np.abs(np.asarray(interference)) ** 2 + np.abs(np.asarray(noise)) ** 2
    out = np.full(np.broadcast(num, den).shape, np.inf)
    np.divide(num, den, out=out, where=den > 0)
    return out

"""Two-sided multi-channel Wiener paths and the finite-rank forcing map.

Increments over grid cells are a pure function of (seed, channel, cell
index): cells are grouped into fixed blocks of ``_BLOCK`` increments and
each block is drawn from its own generator keyed by (seed, channel, block
index).  Consequences:

* identical (seed, m, dt_grid) reproduce the path bit-for-bit,
* enlarging the window [t_min, t_max] never changes existing values, so
  pullback experiments with growing horizons see one fixed realization,
* the shift path(t + s) - path(s) is again a path of the same family
  (its cells are the same cells, translated by an integer offset).

The forcing map sends the m channel values to a spatial field,
Q x = sum_j amplitudes_j x_j profile_j, with sine-band-limited profiles
(which vanish at the boundary by construction).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .domain import Domain, SpectralField

__all__ = ["WienerPath", "NoiseOperator", "qw", "wiener_shift", "noise_growth_report"]

_BLOCK = 1024
_BLOCK_OFFSET = 1 << 62  # SeedSequence entropy must be nonnegative


def _increments(seed: int, channel: int, k_lo: int, k_hi: int, dt: float) -> np.ndarray:
    """N(0, dt) increments for cells k_lo..k_hi-1 of one channel."""
    out = np.empty(k_hi - k_lo)
    pos = 0
    b_lo = k_lo // _BLOCK
    b_hi = (k_hi - 1) // _BLOCK
    for b in range(b_lo, b_hi + 1):
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=(int(seed), int(channel), b + _BLOCK_OFFSET))
        )
        block = rng.standard_normal(_BLOCK)
        lo = max(k_lo, b * _BLOCK) - b * _BLOCK
        hi = min(k_hi, (b + 1) * _BLOCK) - b * _BLOCK
        out[pos : pos + hi - lo] = block[lo:hi]
        pos += hi - lo
    return out * np.sqrt(dt)


@dataclass(frozen=True)
class WienerPath:
    """Seeded two-sided m-channel Brownian path on a fixed grid.

    ``origin`` is the absolute cell index of this path's time zero; it is
    0 for freshly constructed paths and nonzero for shifted views, which
    keeps shifted paths on the same underlying increment stream.
    """

    seed: int
    m: int
    dt_grid: float
    t_min: float
    t_max: float
    origin: int = 0

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"need at least one channel, got m = {self.m}")
        if self.dt_grid <= 0:
            raise ValueError(f"dt_grid must be positive, got {self.dt_grid}")
        if not self.t_min <= 0.0 <= self.t_max:
            raise ValueError(
                f"window [{self.t_min}, {self.t_max}] must contain 0 "
                "(paths are anchored at W(0) = 0)"
            )

    # grid bookkeeping: local grid index i covers t = (k_lo + i) * dt_grid
    # in shifted time, cell k in absolute time is k + origin.

    @property
    def _k_lo(self) -> int:
        return int(np.floor(self.t_min / self.dt_grid + 1e-9))

    @property
    def _k_hi(self) -> int:
        return int(np.ceil(self.t_max / self.dt_grid - 1e-9))

    @cached_property
    def _samples(self) -> np.ndarray:
        """(m, n_grid) channel values at grid times, W(0) = 0.

        Sums accumulate outward from time zero in both directions, so
        enlarging the window reproduces the old values bit-for-bit.
        """
        k_lo, k_hi = self._k_lo, self._k_hi
        n_neg = -k_lo
        vals = np.empty((self.m, k_hi - k_lo + 1))
        for j in range(self.m):
            inc = _increments(self.seed, j, k_lo + self.origin, k_hi + self.origin, self.dt_grid)
            pos = np.cumsum(inc[n_neg:])
            neg = -np.cumsum(inc[:n_neg][::-1])[::-1]
            vals[j] = np.concatenate([neg, [0.0], pos])
        vals.flags.writeable = False
        return vals

    @property
    def grid_times(self) -> np.ndarray:
        return np.arange(self._k_lo, self._k_hi + 1) * self.dt_grid

    def _locate(self, t: float) -> float:
        if not (self.t_min - 1e-9 * self.dt_grid <= t <= self.t_max + 1e-9 * self.dt_grid):
            raise ValueError(
                f"time {t} outside the usable window [{self.t_min}, {self.t_max}]"
            )
        return t / self.dt_grid - self._k_lo

    def values(self, t: float) -> np.ndarray:
        """Channel values W(t), linearly interpolated off the grid."""
        pos = self._locate(t)
        i = int(np.floor(pos))
        frac = pos - i
        s = self._samples
        if frac < 1e-9:
            return s[:, i].copy()
        if frac > 1 - 1e-9:
            return s[:, i + 1].copy()
        return (1.0 - frac) * s[:, i] + frac * s[:, i + 1]

    def values_many(self, times: np.ndarray) -> np.ndarray:
        """(len(times), m) channel values."""
        return np.stack([self.values(float(t)) for t in np.asarray(times).ravel()])

    def metadata(self) -> dict:
        return {
            "seed": self.seed,
            "m": self.m,
            "dt_grid": self.dt_grid,
            "t_min": self.t_min,
            "t_max": self.t_max,
            "origin": self.origin,
        }


def wiener_shift(path: WienerPath, s: float) -> WienerPath:
    """Time shift: returns the path t -> W(t + s) - W(s).

    The shift must be grid-aligned so the shifted path lives on the same
    increment stream; the usable window translates to
    [t_min - s, t_max - s].
    """
    cells = s / path.dt_grid
    k = round(cells)
    if abs(cells - k) > 1e-9:
        raise ValueError(f"shift {s} is not aligned with dt_grid = {path.dt_grid}")
    if not (path.t_min - 1e-9 <= s <= path.t_max + 1e-9):
        raise ValueError(
            f"shift {s} leaves the generable window [{path.t_min}, {path.t_max}]"
        )
    return WienerPath(
        seed=path.seed,
        m=path.m,
        dt_grid=path.dt_grid,
        t_min=path.t_min - k * path.dt_grid,
        t_max=path.t_max - k * path.dt_grid,
        origin=path.origin + k,
    )


@dataclass(frozen=True)
class NoiseOperator:
    """Finite-rank map from channel values to spatial fields."""

    profiles: tuple  # of SpectralField
    smoothness_class: str = "C2_0"  # "C1_0" | "C2_0"
    amplitudes: tuple = ()

    def __post_init__(self):
        if self.smoothness_class not in ("C1_0", "C2_0"):
            raise ValueError(f"unknown smoothness class {self.smoothness_class!r}")
        profiles = tuple(self.profiles)
        if not profiles:
            raise ValueError("need at least one profile (use amplitude 0 for no noise)")
        object.__setattr__(self, "profiles", profiles)
        amps = tuple(self.amplitudes) if self.amplitudes else (1.0,) * len(profiles)
        if len(amps) != len(profiles):
            raise ValueError("amplitudes and profiles must have matching length")
        if any(a < 0 for a in amps):
            raise ValueError("amplitudes must be nonnegative")
        object.__setattr__(self, "amplitudes", amps)

    @property
    def m(self) -> int:
        return len(self.profiles)

    @property
    def domain(self) -> Domain:
        return self.profiles[0].domain

    @cached_property
    def _coeff_matrix(self) -> np.ndarray:
        """(m, n_modes) matrix of amplitude-scaled profile coefficients."""
        mat = np.stack([a * f.coeffs for a, f in zip(self.amplitudes, self.profiles)])
        mat.flags.writeable = False
        return mat

    def apply(self, channel_values: np.ndarray) -> np.ndarray:
        """Coefficients of Q x for channel values x (vector of length m)."""
        return np.asarray(channel_values) @ self._coeff_matrix

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "amplitudes": list(self.amplitudes),
            "smoothness_class": self.smoothness_class,
        }

    @staticmethod
    def single_modes(domain: Domain, modes, amplitudes=None,
                     smoothness_class="C2_0") -> "NoiseOperator":
        """Operator whose profiles are single eigenmodes e_k."""
        profiles = tuple(domain.basis(k) for k in modes)
        return NoiseOperator(profiles, smoothness_class,
                             tuple(amplitudes) if amplitudes is not None else ())


def qw(path: WienerPath, Q: NoiseOperator, t: float) -> SpectralField:
    """The forcing field Q W_t = sum_j amplitudes_j W_j(t) profile_j."""
    if Q.m != path.m:
        raise ValueError(f"operator rank {Q.m} does not match path channels {path.m}")
    return SpectralField(Q.domain, Q.apply(path.values(t)))


def noise_growth_report(path: WienerPath, Q: NoiseOperator, q: float, t_list,
                        include_laplacian: bool | None = None) -> dict:
    """Forcing-size table: ||QW_t||_q^q, ||grad QW_t||_q^q, ||lap QW_t||_q^q.

    The Laplacian column requires smoothness class C2_0 and is used by the
    strong-norm energy estimates; the gradient column feeds the weaker
    route.  Returns a dict of aligned arrays keyed 't', 'qw', 'grad_qw'
    and (C2_0 only) 'lap_qw'.
    """
    if q < 1:
        raise ValueError(f"growth report requires q >= 1, got {q}")
    if include_laplacian and Q.smoothness_class != "C2_0":
        laplacian_growth_guard(Q)
    want_lap = (Q.smoothness_class == "C2_0") if include_laplacian is None \
        else include_laplacian
    times = np.asarray(list(t_list), dtype=float)
    out = {
        "t": times,
        "qw": np.empty_like(times),
        "grad_qw": np.empty_like(times),
    }
    if want_lap:
        out["lap_qw"] = np.empty_like(times)
    for i, t in enumerate(times):
        f = qw(path, Q, float(t))
        out["qw"][i] = f.lp_norm(q) ** q
        out["grad_qw"][i] = f.grad_lp_norm(q) ** q
        if want_lap:
            out["lap_qw"][i] = f.laplacian().lp_norm(q) ** q
    return out


def laplacian_growth_guard(Q: NoiseOperator):
    """Raise unless the operator is smooth enough for Laplacian forcing."""
    if Q.smoothness_class != "C2_0":
        raise ValueError(
            "Laplacian of the forcing requested, but the noise profiles are "
            f"only class {Q.smoothness_class}"
        )

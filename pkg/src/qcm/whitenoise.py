"""Truncated harmonic oscillator under global white noise.

Two moment models are available:

``exact``
    ``<H^k> = (1-p) E0^k + (p/N) sum_j (E0 + j*gap)^k`` with the finite sum in
    closed form.
``small_gap``
    ``<H^k> = E0^k (1 - p + (p/2) N k gap / E0)``.  This keeps only the
    gap-dependent part ``k E0^(k-1) gap N^2 / 2`` of the first-order trace and
    drops its leading ``N E0^k`` term, so it does not reduce to ``E0^k`` as
    ``gap -> 0``.  The closed-form asymptotes of :func:`asymptotic_estimates`
    follow from this form (the dropped term is where their ``|E0|`` comes from).

The models disagree once ``N*gap`` is comparable to ``|E0|``, and the
small-gap moments then have negative variance; see :func:`cancellation_experiment`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .estimators import MomentSet, cmx5, cumulants, lanczos4
from .hamiltonian import OscillatorSpectrum, oscillator_traces

MODELS = ("exact", "small_gap")


@dataclass(frozen=True)
class WhiteNoiseScenario:
    spec: OscillatorSpectrum
    p: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must be in [0, 1]")


def noisy_moments_exact(s: WhiteNoiseScenario, K: int = 5) -> MomentSet:
    """White-noise moments of the exact ground state using exact trace sums (rational values)."""
    if not 1 <= K <= 5:
        raise ValueError("K must be in [1, 5]")
    e0 = Fraction(s.spec.ground_energy)
    p = Fraction(s.p)
    n = s.spec.num_levels
    vals = [(1 - p) * e0**k + p * oscillator_traces(s.spec, k, exact=True) / n for k in range(1, K + 1)]
    return MomentSet(tuple(vals))


def noisy_moments_small_gap(s: WhiteNoiseScenario, K: int = 5) -> MomentSet:
    """Moments under the ``small_gap`` form described in the module docstring."""
    if not 1 <= K <= 5:
        raise ValueError("K must be in [1, 5]")
    e0 = Fraction(s.spec.ground_energy)
    gap = Fraction(s.spec.gap)
    p = Fraction(s.p)
    n = s.spec.num_levels
    vals = [e0**k * (1 - p + p / 2 * n * k * gap / e0) for k in range(1, K + 1)]
    return MomentSet(tuple(vals))


def noisy_moments(s: WhiteNoiseScenario, K: int = 5, model: str = "exact") -> MomentSet:
    if model == "exact":
        return noisy_moments_exact(s, K)
    if model == "small_gap":
        return noisy_moments_small_gap(s, K)
    raise ValueError(f"unknown model {model!r}; expected one of {MODELS}")


def asymptotic_estimates(s: WhiteNoiseScenario) -> dict[str, float]:
    """Closed-form large-N limits of the three estimators (O(1/N) terms dropped)."""
    e0, gap, n, p = s.spec.ground_energy, s.spec.gap, s.spec.num_levels, s.p
    if e0 >= 0 or gap <= 0:
        raise ValueError("asymptotic forms need E0 < 0 and gap > 0")
    shift = abs(e0) + 0.5 * gap * n
    return {
        "variational": e0 + p * shift,
        "cmx5": e0 + p / 3 * shift,
        "lanczos4": e0 + math.sqrt(2 * abs(e0) ** 3 / (gap * n)),
    }


def trace_small_gap(spec: OscillatorSpectrum, k: int) -> float:
    """First-order-in-gap trace ``N E0^k + k E0^(k-1) gap N^2 / 2``."""
    e0, gap, n = spec.ground_energy, spec.gap, spec.num_levels
    return n * e0**k + 0.5 * k * e0 ** (k - 1) * gap * n * n


@dataclass
class CancellationRow:
    p: float
    variational: float
    cmx5: float
    lanczos4: float
    dev_variational: float
    dev_cmx5: float
    dev_lanczos4: float
    flag_cmx5: bool
    flag_lanczos4: bool


@dataclass
class CancellationResult:
    spec: OscillatorSpectrum
    model: str
    rows: list[CancellationRow]
    lanczos4_offset: float  # sqrt(2|E0|^3/(gap N))
    degenerate: bool

    @property
    def lanczos4_spread(self) -> float:
        vals = [r.lanczos4 for r in self.rows]
        return max(vals) - min(vals)

    def csv_rows(self) -> list[dict]:
        return [vars(r) for r in self.rows]


def cancellation_experiment(spec: OscillatorSpectrum, p_grid: Sequence[float], model: str = "exact") -> CancellationResult:
    """Estimators of noisy ground-state moments across a grid of white-noise levels."""
    if any(not 0.0 <= p <= 1.0 for p in p_grid):
        raise ValueError("p_grid must lie in [0, 1]")
    e0 = spec.ground_energy
    degenerate = spec.gap <= 0 or spec.num_levels < 2
    rows = []
    for p in p_grid:
        c = cumulants(noisy_moments(WhiteNoiseScenario(spec, p), 5, model))
        var = float(c[1])
        cm, cm_flag = cmx5(c, with_flag=True)
        l4, l4_flag = lanczos4(c, with_flag=True)
        rows.append(CancellationRow(p, var, cm, l4, var - e0, cm - e0, l4 - e0, cm_flag, l4_flag))
    offset = math.sqrt(2 * abs(e0) ** 3 / (spec.gap * spec.num_levels)) if not degenerate else float("nan")
    return CancellationResult(spec, model, rows, offset, degenerate)

"""Moments -> cumulants -> ground-state energy estimates.

All arithmetic before the final square root uses whatever number type comes
in, so ``fractions.Fraction`` moments give exact cumulants.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from math import comb
from typing import Sequence

from .pauli import PauliSum, identity_coefficient

DEGENERATE_TOL = 1e-9


@dataclass(frozen=True)
class MomentSet:
    """``values[k-1] = <H^k>``; ``std_errs`` optional, same length."""

    values: tuple
    std_errs: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))
        if self.std_errs is not None:
            object.__setattr__(self, "std_errs", tuple(self.std_errs))
            if len(self.std_errs) != len(self.values):
                raise ValueError("std_errs must match values in length")

    @property
    def order(self) -> int:
        return len(self.values)

    def __getitem__(self, k: int):
        """1-based: ``m[1]`` is ``<H>``."""
        return self.values[k - 1]


@dataclass(frozen=True)
class CumulantSet:
    values: tuple

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))

    @property
    def order(self) -> int:
        return len(self.values)

    def __getitem__(self, k: int):
        return self.values[k - 1]


def _as_moments(m) -> MomentSet:
    return m if isinstance(m, MomentSet) else MomentSet(tuple(m))


def _as_cumulants(c) -> CumulantSet:
    return c if isinstance(c, CumulantSet) else CumulantSet(tuple(c))


def cumulants(m: MomentSet | Sequence) -> CumulantSet:
    """``c_n = <H^n> - sum_{p=0}^{n-2} C(n-1, p) c_{p+1} <H^{n-1-p}>``."""
    m = _as_moments(m)
    mom = (1,) + m.values
    c: list = []
    for n in range(1, m.order + 1):
        acc = mom[n]
        for p in range(n - 1):
            acc = acc - comb(n - 1, p) * c[p] * mom[n - 1 - p]
        c.append(acc)
    return CumulantSet(tuple(c))


def _degenerate(c1, c2, value, power: int) -> bool:
    """True if ``value`` (dimension energy^power) is negligible on the spread scale.

    The spread ``sigma = sqrt(|c2|)`` sets the unit, so the test is invariant
    under rescaling H. A spread below ``1e-7 max(1, |c1|)`` is an eigenstate
    to working precision and is always degenerate.
    """
    sigma = math.sqrt(abs(float(c2)))
    if sigma <= 1e-7 * max(1.0, abs(float(c1))):
        return True
    return abs(float(value)) < DEGENERATE_TOL * sigma**power


def lanczos4(c: CumulantSet | Sequence, *, with_flag: bool = False):
    """Fourth-order Lanczos estimate

    ``c1 - c2^2/(c3^2 - c2 c4) * (sqrt(3 c3^2 - 2 c2 c4) - c3)``.

    Returns ``c1`` (flagged degenerate) when the denominator vanishes, which is
    the exact-eigenstate limit, or when the radicand is negative.
    """
    c = _as_cumulants(c)
    if c.order < 4:
        raise ValueError("lanczos4 needs cumulants up to c4")
    c1, c2, c3, c4 = c.values[:4]
    denom = c3 * c3 - c2 * c4
    radicand = 3 * c3 * c3 - 2 * c2 * c4
    if _degenerate(c1, c2, denom, 6) or float(radicand) < 0:
        value, flag = float(c1), True
    else:
        value = float(c1) - float(c2 * c2 / denom) * (math.sqrt(float(radicand)) - float(c3))
        flag = False
    return (value, flag) if with_flag else value


def cmx5(c: CumulantSet | Sequence, *, with_flag: bool = False):
    """Three-term connected-moments expansion

    ``c1 - c2^2/c3 - (c2 c4 - c3^2)^2 / (c3 (c3 c5 - c4^2))``.
    """
    c = _as_cumulants(c)
    if c.order < 5:
        raise ValueError("cmx5 needs cumulants up to c5")
    c1, c2, c3, c4, c5 = c.values[:5]
    inner = c3 * c5 - c4 * c4
    if _degenerate(c1, c2, c3, 3) or _degenerate(c1, c2, inner, 8):
        value, flag = float(c1), True
    else:
        value = float(c1 - c2 * c2 / c3 - (c2 * c4 - c3 * c3) ** 2 / (c3 * inner))
        flag = False
    return (value, flag) if with_flag else value


def variational(c: CumulantSet | Sequence) -> float:
    return float(_as_cumulants(c)[1])


ESTIMATORS = {"variational": variational, "lanczos4": lanczos4, "cmx5": cmx5}


def estimate(moments: MomentSet | Sequence, estimator: str = "lanczos4") -> float:
    return float(ESTIMATORS[estimator](cumulants(moments)))


def approx_error(e: float, e0: float) -> float:
    """Relative error ``|1 - e/e0|``."""
    if e0 == 0:
        raise ValueError("reference energy e0 must be nonzero")
    return abs(1.0 - e / e0)


def ht_moments(h_powers: Sequence[PauliSum]) -> MomentSet:
    """Maximally-mixed moments ``tr(H^k)/2^q`` from identity coefficients."""
    return MomentSet(tuple(identity_coefficient(p) for p in h_powers))


def ht_limit(h_powers: Sequence[PauliSum], estimator: str = "lanczos4", *, with_flag: bool = False):
    """Estimator evaluated on the maximally mixed state (no quantum state needed)."""
    if len(h_powers) < 4 and estimator != "variational":
        raise ValueError("need H, H^2, H^3 and H^4")
    c = cumulants(ht_moments(h_powers))
    if estimator == "variational":
        value, flag = variational(c), False
    else:
        value, flag = ESTIMATORS[estimator](c, with_flag=True)
    return (value, flag) if with_flag else value


# reports ---------------------------------------------------------------------


def _propagate(fn, values: Sequence[float], errs: Sequence[float] | None) -> float | None:
    """First-order error bar from independent moment std-errs (central differences)."""
    if errs is None:
        return None
    base = [float(v) for v in values]
    var = 0.0
    for k, s in enumerate(errs):
        if not s:
            continue
        h = max(abs(base[k]), 1e-12) * 1e-6
        up = list(base)
        dn = list(base)
        up[k] += h
        dn[k] -= h
        d = (fn(up) - fn(dn)) / (2 * h)
        var += (d * s) ** 2
    return math.sqrt(var)


@dataclass
class EstimateReport:
    variational: float
    lanczos4: float
    cmx5: float | None
    ht_lanczos4: float | None = None
    e0: float | None = None
    approx_errors: dict = field(default_factory=dict)
    degenerate_flags: dict = field(default_factory=dict)
    std_errs: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return asdict(self)


def estimate_report(
    moments: MomentSet | Sequence,
    *,
    e0: float | None = None,
    ht_lanczos4: float | None = None,
) -> EstimateReport:
    m = _as_moments(moments)
    c = cumulants(m)
    l4, l4_flag = lanczos4(c, with_flag=True)
    if m.order >= 5:
        cm, cm_flag = cmx5(c, with_flag=True)
    else:
        cm, cm_flag = None, False
    rep = EstimateReport(
        variational=float(c[1]),
        lanczos4=l4,
        cmx5=cm,
        ht_lanczos4=ht_lanczos4,
        e0=e0,
        degenerate_flags={"variational": False, "lanczos4": l4_flag, "cmx5": cm_flag},
    )
    if e0 is not None:
        rep.approx_errors = {
            name: approx_error(val, e0)
            for name, val in (("variational", rep.variational), ("lanczos4", l4), ("cmx5", cm))
            if val is not None
        }
    if m.std_errs is not None:
        vals = m.values
        rep.std_errs = {
            "variational": float(m.std_errs[0]),
            "lanczos4": _propagate(lambda v: lanczos4(cumulants(v[:4])), vals[:4], m.std_errs[:4]),
        }
        if cm is not None:
            rep.std_errs["cmx5"] = _propagate(lambda v: cmx5(cumulants(v[:5])), vals[:5], m.std_errs[:5])
    return rep

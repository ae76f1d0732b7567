"""Weighted sums of Pauli strings in symplectic bit-mask form.

A string on ``q`` qubits is a pair of integer masks ``(x, z)``; bit ``i`` of
each mask is the X/Z component on qubit ``i``:

    I = (0, 0), X = (1, 0), Z = (0, 1), Y = (1, 1)

The operator represented by ``(x, z)`` is the plain tensor product of
I/X/Y/Z (so ``Y`` is the Hermitian Pauli Y, not ``XZ``).  Internally that is
``i**popcount(x & z) * X**x Z**z``, which is what the product rule below uses.

Text labels put qubit 0 first: ``"XZI"`` is X on qubit 0, Z on qubit 1.
Basis-state index ``b`` has qubit ``i`` in bit ``i`` (little endian).
"""

from __future__ import annotations

import json
from typing import Iterable, Mapping

import numpy as np
import scipy.sparse as sp

PRUNE_TOL = 1e-12
MAX_QUBITS = 24

_PAULI_BITS = {"I": (0, 0), "X": (1, 0), "Y": (1, 1), "Z": (0, 1)}
_BITS_PAULI = {v: k for k, v in _PAULI_BITS.items()}
_I_POWERS = np.array([1, 1j, -1, -1j], dtype=complex)


def _popcount(a):
    return np.bitwise_count(np.asarray(a, dtype=np.int64)).astype(np.int64)


def label_to_masks(label: str) -> tuple[int, int]:
    x = z = 0
    for i, ch in enumerate(label.upper()):
        try:
            bx, bz = _PAULI_BITS[ch]
        except KeyError:
            raise ValueError(f"invalid Pauli character {ch!r} in {label!r}") from None
        x |= bx << i
        z |= bz << i
    return x, z


def masks_to_label(x: int, z: int, num_qubits: int) -> str:
    return "".join(_BITS_PAULI[((x >> i) & 1, (z >> i) & 1)] for i in range(num_qubits))


class PauliSum:
    """Immutable sum ``sum_k c_k P_k`` of Pauli strings on ``num_qubits`` qubits.

    Terms are kept merged, pruned (``|c| > PRUNE_TOL``) and sorted by the
    packed key ``x | z << q``, so two sums describing the same operator have
    identical arrays regardless of construction order.
    """

    __slots__ = ("num_qubits", "x", "z", "coeffs")

    def __init__(self, num_qubits: int, x=(), z=(), coeffs=(), *, prune: float = PRUNE_TOL):
        if not 0 <= num_qubits <= MAX_QUBITS:
            raise ValueError(f"num_qubits must be in [0, {MAX_QUBITS}], got {num_qubits}")
        x = np.asarray(x, dtype=np.int64).ravel()
        z = np.asarray(z, dtype=np.int64).ravel()
        coeffs = np.asarray(coeffs, dtype=complex).ravel()
        if not (x.shape == z.shape == coeffs.shape):
            raise ValueError("x, z and coeffs must have equal length")
        limit = 1 << num_qubits
        if x.size and (x.min() < 0 or z.min() < 0 or x.max() >= limit or z.max() >= limit):
            raise ValueError(f"mask has bits set at positions >= {num_qubits}")
        keys, c = _merge(x | (z << num_qubits), coeffs, prune)
        self.num_qubits = num_qubits
        self.x = keys & (limit - 1)
        self.z = keys >> num_qubits
        self.coeffs = c
        for arr in (self.x, self.z, self.coeffs):
            arr.flags.writeable = False

    # construction -----------------------------------------------------------

    @classmethod
    def from_terms(cls, num_qubits: int, terms: Iterable[tuple[str, complex]]) -> "PauliSum":
        """Build from ``(label, coeff)`` pairs; labels are padded with ``I``."""
        xs, zs, cs = [], [], []
        for label, c in terms:
            if len(label) > num_qubits:
                raise ValueError(f"label {label!r} longer than {num_qubits} qubits")
            x, z = label_to_masks(label)
            xs.append(x)
            zs.append(z)
            cs.append(c)
        return cls(num_qubits, xs, zs, cs)

    @classmethod
    def from_sparse_label(cls, num_qubits: int, ops: Mapping[int, str], coeff: complex = 1.0) -> "PauliSum":
        """Single term from ``{qubit: 'X'|'Y'|'Z'}``."""
        chars = ["I"] * num_qubits
        for q, p in ops.items():
            if not 0 <= q < num_qubits:
                raise ValueError(f"qubit index {q} out of range for {num_qubits} qubits")
            chars[q] = p
        return cls.from_terms(num_qubits, [("".join(chars), coeff)])

    @classmethod
    def identity(cls, num_qubits: int, coeff: complex = 1.0) -> "PauliSum":
        return cls(num_qubits, [0], [0], [coeff])

    @classmethod
    def zero(cls, num_qubits: int) -> "PauliSum":
        return cls(num_qubits)

    # mapping view -----------------------------------------------------------

    def __len__(self) -> int:
        return int(self.coeffs.size)

    @property
    def keys(self) -> np.ndarray:
        return self.x | (self.z << self.num_qubits)

    @property
    def terms(self) -> dict[tuple[int, int], complex]:
        return {(int(a), int(b)): complex(c) for a, b, c in zip(self.x, self.z, self.coeffs)}

    def labels(self) -> list[str]:
        return [masks_to_label(int(a), int(b), self.num_qubits) for a, b in zip(self.x, self.z)]

    def __iter__(self):
        for lab, c in zip(self.labels(), self.coeffs):
            yield lab, complex(c)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PauliSum):
            return NotImplemented
        return (
            self.num_qubits == other.num_qubits
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.z, other.z)
            and np.array_equal(self.coeffs, other.coeffs)
        )

    __hash__ = None

    def __repr__(self) -> str:
        head = ", ".join(f"{c.real:+.6g}{c.imag:+.6g}j*{lab}" for lab, c in list(self)[:6])
        more = f", ... ({len(self)} terms)" if len(self) > 6 else ""
        return f"PauliSum(q={self.num_qubits}: {head}{more})"

    def allclose(self, other: "PauliSum", atol: float = 1e-10) -> bool:
        if self.num_qubits != other.num_qubits:
            return False
        diff = self - other
        return len(diff) == 0 or float(np.abs(diff.coeffs).max()) <= atol

    # arithmetic -------------------------------------------------------------

    def __add__(self, other: "PauliSum") -> "PauliSum":
        _check_same(self, other)
        return PauliSum(
            self.num_qubits,
            np.concatenate([self.x, other.x]),
            np.concatenate([self.z, other.z]),
            np.concatenate([self.coeffs, other.coeffs]),
        )

    def __neg__(self) -> "PauliSum":
        return self * -1.0

    def __sub__(self, other: "PauliSum") -> "PauliSum":
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, PauliSum):
            return multiply(self, other)
        return PauliSum(self.num_qubits, self.x, self.z, self.coeffs * complex(other))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __matmul__(self, other: "PauliSum") -> "PauliSum":
        return multiply(self, other)

    def dagger(self) -> "PauliSum":
        return PauliSum(self.num_qubits, self.x, self.z, np.conj(self.coeffs))

    def max_imag(self) -> float:
        return float(np.abs(self.coeffs.imag).max()) if len(self) else 0.0

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        return self.max_imag() <= tol

    def shift(self, value: float) -> "PauliSum":
        return self + PauliSum.identity(self.num_qubits, value)

    # dense / sparse / matrix-free views ------------------------------------

    def _phases(self) -> np.ndarray:
        return self.coeffs * _I_POWERS[_popcount(self.x & self.z) % 4]

    def to_sparse(self) -> sp.csr_matrix:
        """CSR matrix; rows/cols are little-endian basis indices."""
        dim = 1 << self.num_qubits
        cols = np.arange(dim, dtype=np.int64)
        rows_all, cols_all, vals_all = [], [], []
        for xm, zm, c in zip(self.x, self.z, self._phases()):
            sign = 1 - 2 * (_popcount(cols & zm) & 1)
            rows_all.append(cols ^ xm)
            cols_all.append(cols)
            vals_all.append(c * sign)
        if not rows_all:
            return sp.csr_matrix((dim, dim), dtype=complex)
        mat = sp.coo_matrix(
            (np.concatenate(vals_all), (np.concatenate(rows_all), np.concatenate(cols_all))),
            shape=(dim, dim),
        )
        return mat.tocsr()

    def to_matrix(self) -> np.ndarray:
        if self.num_qubits > 14:
            raise ValueError("dense matrices are limited to 14 qubits")
        return self.to_sparse().toarray()

    def apply(self, psi: np.ndarray) -> np.ndarray:
        """Matrix-free ``H @ psi`` (psi may be a vector or a stack of columns)."""
        psi = np.asarray(psi)
        dim = 1 << self.num_qubits
        if psi.shape[0] != dim:
            raise ValueError(f"vector dimension {psi.shape[0]} != 2**{self.num_qubits}")
        out = np.zeros(psi.shape, dtype=complex)
        idx = np.arange(dim, dtype=np.int64)
        # (P psi)[b] = i^{|x&z|} (-1)^{|z & (b^x)|} psi[b^x]
        for xm, zm, c in zip(self.x, self.z, self._phases()):
            src = idx ^ xm
            sign = 1 - 2 * (_popcount(src & zm) & 1)
            w = c * sign
            if psi.ndim == 1:
                out += w * psi[src]
            else:
                out += w[:, None] * psi[src]
        return out

    # serialization ----------------------------------------------------------

    def to_text(self) -> str:
        """One ``coeff label`` line per term; complex coefficients as ``a+bj``."""
        lines = []
        for lab, c in self:
            val = repr(c.real) if c.imag == 0 else repr(c).strip("()")
            lines.append(f"{val} {lab}")
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def from_text(cls, text: str, num_qubits: int | None = None) -> "PauliSum":
        terms = []
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            val, lab = line.split()
            terms.append((lab, complex(val)))
        if num_qubits is None:
            if not terms:
                raise ValueError("cannot infer qubit count from empty text")
            num_qubits = len(terms[0][0])
        return cls.from_terms(num_qubits, terms)

    def to_json(self) -> dict:
        return {
            "num_qubits": self.num_qubits,
            "terms": [
                {"x": int(a), "z": int(b), "re": float(c.real), "im": float(c.imag)}
                for a, b, c in zip(self.x, self.z, self.coeffs)
            ],
        }

    @classmethod
    def from_json(cls, obj: dict | str) -> "PauliSum":
        if isinstance(obj, str):
            obj = json.loads(obj)
        t = obj["terms"]
        return cls(
            int(obj["num_qubits"]),
            [e["x"] for e in t],
            [e["z"] for e in t],
            [complex(e["re"], e.get("im", 0.0)) for e in t],
        )


def _check_same(a: PauliSum, b: PauliSum) -> None:
    if a.num_qubits != b.num_qubits:
        raise ValueError(f"qubit-count mismatch: {a.num_qubits} vs {b.num_qubits}")


def _merge(keys: np.ndarray, coeffs: np.ndarray, prune: float) -> tuple[np.ndarray, np.ndarray]:
    if keys.size == 0:
        return keys.astype(np.int64), coeffs.astype(complex)
    uniq, inv = np.unique(keys, return_inverse=True)
    re = np.bincount(inv, weights=coeffs.real, minlength=uniq.size)
    im = np.bincount(inv, weights=coeffs.imag, minlength=uniq.size)
    c = re + 1j * im
    keep = np.abs(c) > prune
    return uniq[keep], c[keep]


def multiply(a: PauliSum, b: PauliSum, *, chunk: int = 1 << 22) -> PauliSum:
    """Operator product ``a @ b`` with like terms merged."""
    _check_same(a, b)
    q = a.num_qubits
    if len(a) == 0 or len(b) == 0:
        return PauliSum.zero(q)
    bx, bz, bc = b.x, b.z, b.coeffs
    b_yy = _popcount(bx & bz)
    a_yy = _popcount(a.x & a.z)
    rows = max(1, chunk // len(b))
    keys_parts, coeff_parts = [], []
    for start in range(0, len(a), rows):
        sl = slice(start, start + rows)
        ax = a.x[sl, None]
        az = a.z[sl, None]
        x3 = ax ^ bx
        z3 = az ^ bz
        # i^{|x1z1|+|x2z2|-|x3z3|} (-1)^{|z1 x2|}
        e = a_yy[sl, None] + b_yy - _popcount(x3 & z3) + 2 * _popcount(az & bx)
        c = (a.coeffs[sl, None] * bc) * _I_POWERS[e % 4]
        k, c = _merge((x3 | (z3 << q)).ravel(), c.ravel(), 0.0)
        keys_parts.append(k)
        coeff_parts.append(c)
    keys = np.concatenate(keys_parts)
    coeffs = np.concatenate(coeff_parts)
    mask = (1 << q) - 1
    return PauliSum(q, keys & mask, keys >> q, coeffs)


def power(h: PauliSum, n: int) -> PauliSum:
    """``h**n`` by repeated right-multiplication (h, h^2, h^3, ...)."""
    if not 1 <= n <= 5:
        raise ValueError(f"power n must be in [1, 5], got {n}")
    return powers(h, n)[-1]


def powers(h: PauliSum, n: int) -> list[PauliSum]:
    """``[h, h^2, ..., h^n]``; each power reuses the previous one."""
    if n < 1:
        raise ValueError("n must be >= 1")
    out = [h]
    for _ in range(n - 1):
        out.append(multiply(out[-1], h))
    return out


def identity_coefficient(h: PauliSum) -> float:
    """Coefficient of ``I...I``, i.e. ``tr(h) / 2**q`` (real part)."""
    hit = (h.x == 0) & (h.z == 0)
    if not hit.any():
        return 0.0
    return float(h.coeffs[hit][0].real)


def expectation_exact(h: PauliSum, state, *, imag_tol: float = 1e-9) -> float:
    """Exact ``<psi|h|psi>`` or ``tr(rho h)`` for a :class:`~qcm.sim.QuantumState` or raw array."""
    data = getattr(state, "data", state)
    data = np.asarray(data)
    dim = 1 << h.num_qubits
    if data.shape[0] != dim:
        raise ValueError(f"state dimension {data.shape[0]} != 2**{h.num_qubits}")
    idx = np.arange(dim, dtype=np.int64)
    total = 0.0 + 0.0j
    for xm, zm, c in zip(h.x, h.z, h._phases()):
        # <b| P = i^{|xz|} (-1)^{|z & b|} <b^x|  (P acting on |b> lands on |b^x>)
        sign = 1 - 2 * (_popcount(idx & zm) & 1)
        if data.ndim == 1:
            total += c * np.dot(np.conj(data[idx ^ xm]), sign * data)
        else:
            # tr(rho P) = sum_b <b|rho P|b> = sum_b sign(b) rho[b, b^x]
            total += c * np.dot(sign, data[idx, idx ^ xm])
    if abs(total.imag) > imag_tol:
        raise ValueError(f"expectation has imaginary part {total.imag:.3e}; sum is not Hermitian")
    return float(total.real)

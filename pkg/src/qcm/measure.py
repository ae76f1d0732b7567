"""Tensor-product-basis (TPB) grouping and shot-sampled moment estimation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .estimators import MomentSet
from .pauli import PauliSum, _popcount, identity_coefficient, masks_to_label
from .rng import make_rng
from .sim import GATES_1Q, QuantumState, _apply_1q_rows, measure_readout_noise

_ROT_X = GATES_1Q["H"]
_ROT_Y = GATES_1Q["H"] @ GATES_1Q["SDG"]  # maps Y eigenbasis to Z


@dataclass(frozen=True)
class TPBGroup:
    basis_x: int  # per-qubit setting as masks: X=(1,0), Y=(1,1), Z or unset=(0,1)/(0,0)
    basis_z: int
    term_x: np.ndarray
    term_z: np.ndarray
    weights: np.ndarray  # |coeff| used for ordering (max over powers for unions)

    def basis_string(self, q: int) -> str:
        # unconstrained qubits are read out in Z
        label = masks_to_label(self.basis_x, self.basis_z, q)
        return label.replace("I", "Z")

    @property
    def term_count(self) -> int:
        return int(self.term_x.size)


@dataclass(frozen=True)
class TPBGrouping:
    num_qubits: int
    groups: tuple[TPBGroup, ...]
    identity_weight: float = 0.0  # classical (zero-shot) group

    def __len__(self) -> int:
        return len(self.groups)

    def term_keys(self) -> np.ndarray:
        q = self.num_qubits
        if not self.groups:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate([g.term_x | (g.term_z << q) for g in self.groups])

    def check(self) -> None:
        """Raise if any group holds two terms that fail qubit-wise commutation."""
        for n, g in enumerate(self.groups):
            sup = g.term_x | g.term_z
            for k in range(g.term_count):
                clash = ((g.term_x ^ g.term_x[k]) | (g.term_z ^ g.term_z[k])) & sup & sup[k]
                if np.any(clash):
                    raise AssertionError(f"group {n} is not qubit-wise commuting")
            if np.any(((g.term_x ^ g.basis_x) | (g.term_z ^ g.basis_z)) & sup):
                raise AssertionError(f"group {n} basis does not cover its terms")

    def to_json(self) -> dict:
        q = self.num_qubits
        return {
            "num_qubits": q,
            "num_groups": len(self.groups),
            "groups": [
                {
                    "basis_string": g.basis_string(q),
                    "term_count": g.term_count,
                    "coeff_l1": float(g.weights.sum()),
                }
                for g in self.groups
            ],
        }


def union_weights(hs: Sequence[PauliSum]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Union of supports of several sums; weight = max |coeff| across them."""
    q = hs[0].num_qubits
    if any(h.num_qubits != q for h in hs):
        raise ValueError("all sums must share the qubit count")
    keys = np.concatenate([h.keys for h in hs])
    w = np.concatenate([np.abs(h.coeffs) for h in hs])
    uniq, inv = np.unique(keys, return_inverse=True)
    ww = np.zeros(uniq.size)
    np.maximum.at(ww, inv, w)
    mask = (1 << q) - 1
    return uniq & mask, uniq >> q, ww


def group_tpb(h: PauliSum | Sequence[PauliSum]) -> TPBGrouping:
    """Greedy first-fit qubit-wise-commuting grouping.

    Terms are visited by descending weight (ties by packed mask).  A term joins
    the first group whose basis agrees with it on every shared non-identity
    qubit, filling that group's identity slots.  Given a list of sums, the
    union of their terms is grouped so shared bases are measured once.
    """
    hs = [h] if isinstance(h, PauliSum) else list(h)
    q = hs[0].num_qubits
    xs, zs, w = union_weights(hs)
    is_id = (xs == 0) & (zs == 0)
    id_weight = float(w[is_id].sum())
    xs, zs, w = xs[~is_id], zs[~is_id], w[~is_id]
    order = np.lexsort((xs | (zs << q), -w))
    n = order.size
    gx = np.zeros(n, dtype=np.int64)
    gz = np.zeros(n, dtype=np.int64)
    gsup = np.zeros(n, dtype=np.int64)
    assign = np.empty(n, dtype=np.int64)
    ngroups = 0
    for t in order:
        tx, tz = xs[t], zs[t]
        ts = tx | tz
        g = -1
        if ngroups:
            clash = ((gx[:ngroups] ^ tx) | (gz[:ngroups] ^ tz)) & gsup[:ngroups] & ts
            hit = np.flatnonzero(clash == 0)
            if hit.size:
                g = hit[0]
        if g < 0:
            g = ngroups
            ngroups += 1
        gx[g] |= tx
        gz[g] |= tz
        gsup[g] |= ts
        assign[t] = g
    # members of each group, in visiting order
    visit = order[np.argsort(assign[order], kind="stable")]
    bounds = np.cumsum(np.bincount(assign, minlength=ngroups))[:-1] if n else []
    groups = [
        TPBGroup(int(gx[g]), int(gz[g]), xs[m], zs[m], w[m])
        for g, m in enumerate(np.split(visit, bounds) if n else [])
    ]
    return TPBGrouping(q, tuple(groups), id_weight)


# sampling ----------------------------------------------------------------------


@dataclass(frozen=True)
class ShotPlan:
    shots_per_group: int = 8192
    seed: int = 0
    exact: bool = False

    def __post_init__(self):
        if self.shots_per_group < 1:
            raise ValueError("shots_per_group must be >= 1")


def rotate_to_basis(state: QuantumState, basis_x: int, basis_z: int) -> np.ndarray:
    """Computational-basis outcome probabilities after per-qubit basis rotations."""
    q = state.num_qubits
    data = state.data
    for j in range(q):
        bx = (basis_x >> j) & 1
        if not bx:
            continue
        u = _ROT_Y if (basis_z >> j) & 1 else _ROT_X
        if state.is_density_matrix:
            half = _apply_1q_rows(data, u, j, q)
            data = _apply_1q_rows(half.conj().T, u, j, q)
        else:
            data = _apply_1q_rows(data, u, j, q)
    if data.ndim == 2:
        p = np.real(np.diagonal(data)).copy()
    else:
        p = np.abs(data) ** 2
    p = np.clip(p, 0.0, None)
    return p / p.sum()


def term_expectations(state: QuantumState, xs: np.ndarray, zs: np.ndarray, chunk: int = 1 << 22) -> np.ndarray:
    """``<P>`` for each Pauli ``(x, z)``, using ``P|c> = i^|x&z| (-1)^|z&c| |c^x>``."""
    c = np.arange(1 << state.num_qubits, dtype=np.int64)
    out = np.empty(xs.size)
    step = max(1, chunk // c.size)
    for lo in range(0, xs.size, step):
        x = xs[lo:lo + step, None]
        z = zs[lo:lo + step, None]
        sign = 1 - 2 * (_popcount(z & c) & 1)
        if state.is_density_matrix:
            amp = state.data[c, c ^ x]
        else:
            amp = state.data.conj()[c ^ x] * state.data[c]
        phase = 1j ** (_popcount(xs[lo:lo + step] & zs[lo:lo + step]) % 4)
        out[lo:lo + step] = np.real(phase * np.sum(sign * amp, axis=1))
    return out


def _coeff_lookup(h: PauliSum, keys: np.ndarray) -> np.ndarray:
    hk = h.keys
    pos = np.searchsorted(hk, keys)
    pos = np.minimum(pos, max(hk.size - 1, 0))
    hit = hk[pos] == keys if hk.size else np.zeros(keys.size, dtype=bool)
    out = np.zeros(keys.size)
    out[hit] = h.coeffs[pos[hit]].real
    return out


def sample_moments(
    h_powers: Sequence[PauliSum],
    state: QuantumState,
    plan: ShotPlan,
    *,
    grouping: TPBGrouping | None = None,
    readout_flip: float = 0.0,
) -> MomentSet:
    """Estimate ``<H^k>`` for each supplied power from TPB measurements.

    Each group gets ``plan.shots_per_group`` shots drawn from its own child
    stream of ``plan.seed``.  ``plan.exact`` gives the infinite-shot limit,
    evaluated term by term without basis rotations.  Identity coefficients are added
    exactly.  Std-errs ignore covariances between terms of one group.
    """
    if not h_powers:
        raise ValueError("no Hamiltonian powers given")
    q = h_powers[0].num_qubits
    if any(h.num_qubits != q for h in h_powers) or state.num_qubits != q:
        raise ValueError("qubit-count mismatch between powers and state")
    if len(h_powers) > 5:
        raise ValueError("at most five moments")
    if grouping is None:
        grouping = group_tpb(list(h_powers))
    K = len(h_powers)
    children = np.random.SeedSequence(plan.seed).spawn(len(grouping.groups))
    totals = np.array([identity_coefficient(h) for h in h_powers])
    variances = np.zeros(K)
    outcomes = np.arange(1 << q, dtype=np.int64)
    for g, ss in zip(grouping.groups, children):
        keys = g.term_x | (g.term_z << q)
        if plan.exact:
            # infinite-shot limit; symmetric flips damp a weight-w parity by (1 - 2f)^w
            damp = (1 - 2 * readout_flip) ** _popcount(g.term_x | g.term_z)
            est = damp * term_expectations(state, g.term_x, g.term_z)
            for k, h in enumerate(h_powers):
                totals[k] += _coeff_lookup(h, keys) @ est
            continue
        probs = rotate_to_basis(state, g.basis_x, g.basis_z)
        if readout_flip:
            probs = measure_readout_noise(probs, readout_flip)
        counts = make_rng(ss).multinomial(plan.shots_per_group, probs / probs.sum())
        freq = counts / plan.shots_per_group
        nz = np.flatnonzero(freq)
        sup = g.term_x | g.term_z
        parity = 1 - 2 * (_popcount(outcomes[nz][None, :] & sup[:, None]) & 1)
        est = parity @ freq[nz]
        for k, h in enumerate(h_powers):
            c = _coeff_lookup(h, keys)
            totals[k] += c @ est
            variances[k] += np.sum(c * c * (1 - est * est)) / plan.shots_per_group
    std = None if plan.exact else tuple(float(s) for s in np.sqrt(variances))
    return MomentSet(tuple(float(t) for t in totals), std)


def exact_moments(h: PauliSum, state: QuantumState, K: int = 5, *, readout_flip: float = 0.0, matrix=None) -> MomentSet:
    """``<H^k>`` for ``k = 1..K`` by repeated application of ``H`` (no Pauli expansion).

    ``readout_flip`` is not supported here (it acts per term); use
    :func:`sample_moments` with ``ShotPlan(exact=True)`` for that case.
    """
    if readout_flip:
        raise ValueError("exact_moments cannot model readout error; use sample_moments(exact=True)")
    hm = h.to_sparse() if matrix is None else matrix
    if state.is_density_matrix:
        vals = []
        b = state.data
        for _ in range(K):
            b = hm @ b
            vals.append(float(np.real(np.trace(b))))
        return MomentSet(tuple(vals))
    psi = state.data
    vs = [psi]
    for _ in range((K + 1) // 2 + 1):
        vs.append(hm @ vs[-1])
    vals = []
    for k in range(1, K + 1):
        a, b = k // 2, k - k // 2
        vals.append(float(np.real(np.vdot(vs[a], vs[b]))))
    return MomentSet(tuple(vals))

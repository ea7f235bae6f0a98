"""Batched simulator for one circuit and many parameter-shifted variants.

The gate list is fused into blocks: a run of single-qubit rotations on one
qubit becomes one 2x2 matrix, and mutually commuting diagonal rotations
(``RZ``/``RZZ``) become one phase vector. Blocks are scheduled as soon as
possible, so blocks sharing a level act on disjoint qubits.

Variants of the circuit ("columns") are described by a mapping
``gate position -> modification``. A column is spawned as a copy of the main
state right before the first block it modifies and then evolved alongside
the main state. Two modifications are supported:

* ``("shift", delta)``: the gate angle becomes ``angle + delta``;
* ``("pauli", 0.0)``: the gate's Pauli is inserted next to the gate, which
  gives the derivative direction ``chi`` with
  ``psi(+-pi/4) = (phi -+ 1j * chi) / sqrt(2)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from numba import njit

from .circuit import CircuitIR, Gate
from .statevector import rotation_matrix, z_pattern

Modification = tuple[str, float]
ColumnSpec = Mapping[int, Modification]

_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Z = np.array([[1, 0], [0, -1]], dtype=complex)
_H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
_SDG = np.array([[1, 0], [0, -1j]], dtype=complex)
BASIS_CHANGE = {"X": _H, "Y": _H @ _SDG, "Z": np.eye(2, dtype=complex)}


@dataclass
class Block:
    kind: str  # "local" or "diag"
    level: int
    positions: list[int] = field(default_factory=list)
    qubits: set[int] = field(default_factory=set)


@njit(cache=True)
def _local_rows(X, q, n, m00, m01, m10, m11):
    """In place: a 2x2 matrix on qubit ``q`` of every row of ``X`` (shape (K, 2^n))."""
    K, D = X.shape
    stride = 1 << (n - 1 - q)
    for c in range(K):
        for base in range(0, D, 2 * stride):
            for i in range(base, base + stride):
                a = X[c, i]
                b = X[c, i + stride]
                X[c, i] = m00 * a + m01 * b
                X[c, i + stride] = m10 * a + m11 * b


@njit(cache=True)
def _diag_rows(X, phase):
    K, D = X.shape
    for c in range(K):
        for i in range(D):
            X[c, i] *= phase[i]


@njit(cache=True)
def _local_rows_multi(X, q, n, mats):
    """Like :func:`_local_rows` with one matrix per row (``mats`` shape (K, 4))."""
    K, D = X.shape
    stride = 1 << (n - 1 - q)
    for c in range(K):
        m00, m01, m10, m11 = mats[c, 0], mats[c, 1], mats[c, 2], mats[c, 3]
        for base in range(0, D, 2 * stride):
            for i in range(base, base + stride):
                a = X[c, i]
                b = X[c, i + stride]
                X[c, i] = m00 * a + m01 * b
                X[c, i + stride] = m10 * a + m11 * b


@njit(cache=True)
def _block_matrix(kinds, angles, positions, mod_pos, mod_type, delta):
    """Product of the block's rotations; ``mod_type`` 0 none, 1 shift, 2 Pauli insert."""
    m00, m01, m10, m11 = 1.0 + 0j, 0j, 0j, 1.0 + 0j
    for k in range(positions.shape[0]):
        p = positions[k]
        a = angles[p]
        if p == mod_pos and mod_type == 1:
            a += delta
        if kinds[p] == 0:
            c, s = np.cos(a), -1j * np.sin(a)
            g00, g01, g10, g11 = c + 0j, s, s, c + 0j
            if p == mod_pos and mod_type == 2:
                g00, g01, g10, g11 = g01, g00, g11, g10
        else:
            e = np.exp(-1j * a)
            g00, g01, g10, g11 = e, 0j, 0j, np.conj(e)
            if p == mod_pos and mod_type == 2:
                g11 = -g11
        n00 = g00 * m00 + g01 * m10
        n01 = g00 * m01 + g01 * m11
        n10 = g10 * m00 + g11 * m10
        n11 = g10 * m01 + g11 * m11
        m00, m01, m10, m11 = n00, n01, n10, n11
    return m00, m01, m10, m11


def _apply_local(X: np.ndarray, mat: np.ndarray, q: int, n: int) -> None:
    _local_rows(X, q, n, mat[0, 0], mat[0, 1], mat[1, 0], mat[1, 1])


_MOD_CODE = {"shift": 1, "pauli": 2}


class Program:
    """A fused, reusable execution plan for one :class:`CircuitIR`."""

    def __init__(self, circuit: CircuitIR):
        self.circuit = circuit
        self.n = circuit.n
        self.gates: list[Gate] = circuit.all_gates()
        self.blocks = self._fuse(self.gates)
        self.block_of = np.empty(len(self.gates), dtype=int)
        for b, blk in enumerate(self.blocks):
            for pos in blk.positions:
                self.block_of[pos] = b
        self._kinds = np.array([0 if g.kind == "RX" else 1 for g in self.gates], dtype=np.int64)
        self._pos = [np.array(blk.positions, dtype=np.int64) for blk in self.blocks]
        self._qubit = [min(blk.qubits) for blk in self.blocks]
        self._zpat = {}
        for b, blk in enumerate(self.blocks):
            if blk.kind == "diag":
                self._zpat[b] = np.stack([z_pattern(self.n, self.gates[p].qubits) for p in blk.positions])

    @staticmethod
    def _fuse(gates: Sequence[Gate]) -> list[Block]:
        blocks: list[Block] = []
        last: dict[int, int] = {}  # qubit -> index of latest block touching it
        diag_at: dict[int, int] = {}  # level -> diag block index

        def level_of(q):
            return blocks[last[q]].level if q in last else -1

        for pos, g in enumerate(gates):
            qs = g.qubits
            if g.kind == "RX" or (
                g.kind == "RZ" and qs[0] in last and blocks[last[qs[0]]].kind == "local"
            ):
                q = qs[0]
                if q in last and blocks[last[q]].kind == "local":
                    idx = last[q]
                else:
                    idx = len(blocks)
                    blocks.append(Block("local", level_of(q) + 1, qubits={q}))
                blocks[idx].positions.append(pos)
                last[q] = idx
                continue
            top = max(level_of(q) for q in qs)
            idx = None
            for lvl in sorted(k for k in diag_at if k >= top):
                cand = diag_at[lvl]
                if all(level_of(q) < lvl or last[q] == cand for q in qs):
                    idx = cand
                    break
            if idx is None:
                lvl = top + 1
                while lvl in diag_at:
                    lvl += 1
                idx = len(blocks)
                blocks.append(Block("diag", lvl))
                diag_at[lvl] = idx
            blocks[idx].positions.append(pos)
            blocks[idx].qubits.update(qs)
            for q in qs:
                last[q] = idx
        order = sorted(range(len(blocks)), key=lambda i: (blocks[i].level, blocks[i].kind != "diag", i))
        return [blocks[i] for i in order]

    # -- block operators ---------------------------------------------------

    def _local_matrix(self, b: int, angles: np.ndarray, mods: Mapping[int, Modification] | None = None):
        mod_pos, mod_type, delta = -1, 0, 0.0
        if mods:
            hits = [p for p in self.blocks[b].positions if p in mods]
            if len(hits) > 1:
                # several modified gates in one block: fold them one at a time
                return self._local_matrix_slow(b, angles, mods)
            if hits:
                mod_pos = hits[0]
                mod_type = _MOD_CODE[mods[mod_pos][0]]
                delta = float(mods[mod_pos][1])
        return np.array(_block_matrix(self._kinds, angles, self._pos[b], mod_pos, mod_type, delta))

    def _local_matrix_slow(self, b: int, angles: np.ndarray, mods: Mapping[int, Modification]):
        mat = np.eye(2, dtype=complex)
        for pos in self.blocks[b].positions:
            g = self.gates[pos]
            a = angles[pos]
            mod = mods.get(pos)
            if mod is not None and mod[0] == "shift":
                a = a + mod[1]
            m = rotation_matrix(g.kind, a)
            if mod is not None and mod[0] == "pauli":
                m = m @ (_X if g.kind == "RX" else _Z)
            mat = m @ mat
        return mat.reshape(-1)

    def _diag_phase(self, b: int, angles: np.ndarray) -> np.ndarray:
        blk = self.blocks[b]
        return np.exp(-1j * (angles[blk.positions] @ self._zpat[b]))

    def _diag_correction(self, b: int, mods: Mapping[int, Modification]) -> np.ndarray:
        blk = self.blocks[b]
        out = np.ones(2**self.n, dtype=complex)
        for k, pos in enumerate(blk.positions):
            mod = mods.get(pos)
            if mod is None:
                continue
            if mod[0] == "shift":
                out = out * np.exp(-1j * mod[1] * self._zpat[b][k])
            else:
                out = out * self._zpat[b][k]
        return out

    # -- execution ---------------------------------------------------------

    def evolve(self, states: np.ndarray, angles: np.ndarray) -> np.ndarray:
        """Evolve one state ``(2^n,)`` or a batch ``(2^n, B)`` through the circuit."""
        states = np.asarray(states, dtype=complex)
        single = states.ndim == 1
        X = np.array(states[None, :] if single else states.T, dtype=complex, order="C", copy=True)
        for b, blk in enumerate(self.blocks):
            if blk.kind == "diag":
                _diag_rows(X, self._diag_phase(b, angles))
            else:
                m = self._local_matrix(b, angles)
                _local_rows(X, self._qubit[b], self.n, m[0], m[1], m[2], m[3])
        return X[0].copy() if single else X.T.copy()

    def run(self, psi: np.ndarray, angles: np.ndarray, columns: Sequence[ColumnSpec]) -> tuple[np.ndarray, np.ndarray]:
        """Main output state and the output of every modified column.

        Returns ``(phi, Y)`` with ``Y[c]`` the final state of column ``c``
        (rows, shape ``(len(columns), 2^n)``).
        """
        dim = 2**self.n
        spawn = np.array([min(self.block_of[p] for p in col) if col else 0 for col in columns], dtype=int)
        order = np.argsort(spawn, kind="stable")
        X = np.empty((1 + len(columns), dim), dtype=complex)
        X[0] = psi
        touched: dict[int, list[int]] = {}
        for row, c in enumerate(order):
            for pos in columns[c]:
                rows = touched.setdefault(int(self.block_of[pos]), [])
                if not rows or rows[-1] != 1 + row:
                    rows.append(1 + row)
        cursor = 0
        for b, blk in enumerate(self.blocks):
            start = cursor
            while cursor < len(order) and spawn[order[cursor]] == b:
                cursor += 1
            if cursor > start:
                X[1 + start : 1 + cursor] = X[0]
            view = X[: 1 + cursor]
            special = touched.get(b, ())
            if blk.kind == "diag":
                _diag_rows(view, self._diag_phase(b, angles))
                for r in special:
                    X[r] *= self._diag_correction(b, columns[order[r - 1]])
            else:
                main = self._local_matrix(b, angles)
                if special:
                    mats = np.empty((view.shape[0], 4), dtype=complex)
                    mats[:] = main
                    for r in special:
                        mats[r] = self._local_matrix(b, angles, columns[order[r - 1]])
                    _local_rows_multi(view, self._qubit[b], self.n, mats)
                else:
                    _local_rows(view, self._qubit[b], self.n, main[0], main[1], main[2], main[3])
        out = np.empty((len(columns), dim), dtype=complex)
        out[order] = X[1:]
        return X[0].copy(), out


def rotate_to_basis(X: np.ndarray, n: int, bases: Sequence[str]) -> np.ndarray:
    """Basis change so a computational readout measures ``bases``; rows are states."""
    Y = np.array(X, dtype=complex, copy=True)
    single = Y.ndim == 1
    if single:
        Y = Y[None, :]
    for q, p in enumerate(bases):
        if p != "Z":
            _apply_local(Y, BASIS_CHANGE[p], q, n)
    return Y[0] if single else Y


def outcome_signs(n: int) -> np.ndarray:
    """``(2^n, n)`` table of +-1 eigenvalues per basis index and qubit."""
    idx = np.arange(2**n)[:, None]
    bits = (idx >> (n - 1 - np.arange(n))[None, :]) & 1
    return 1.0 - 2.0 * bits

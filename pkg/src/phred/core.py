"""Port-Hamiltonian state-space models and their free-parameter encoding.

A model is the quadruple (J, R, Q, B) with J skew-symmetric and R, Q
positive semidefinite; its transfer function is

    H(s) = B^T Q (s I - (J - R) Q)^(-1) B.

Every such model of order ``n`` with ``m`` ports is reachable from an
unconstrained real vector theta of length n(3n+1)/2 + n*m, which is what
makes gradient-based fitting possible without structure constraints.
"""

from __future__ import annotations

import io
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.io
import scipy.linalg

SKEW_TOL = 1e-12
PSD_TOL = 1e-10
RCOND_FLOOR = 1e-14

__all__ = [
    "DimensionError",
    "InvariantError",
    "SingularResolventError",
    "PHSystem",
    "ThetaVector",
    "theta_length",
    "vec_to_upper",
    "vec_to_strict_upper",
    "vec_to_full",
    "assemble",
    "assemble_matrices",
    "extract",
    "transfer_eval",
    "batch_transfer",
    "hamiltonian",
    "save_system",
    "load_system",
]


class DimensionError(ValueError):
    """A vector or matrix argument has an incompatible shape."""


class InvariantError(ValueError):
    """Matrices violate the port-Hamiltonian structure conditions."""


class SingularResolventError(ArithmeticError):
    """The resolvent s I - (J - R) Q is singular or numerically singular."""

    def __init__(self, s):
        self.s = s
        super().__init__(f"resolvent singular or near-singular at s = {s}")


def _readonly(a, dtype=float):
    out = np.array(a, dtype=dtype)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class PHSystem:
    """Immutable port-Hamiltonian model (J, R, Q, B).

    Construction validates the structure: J skew-symmetric to ``SKEW_TOL``
    (entrywise), R and Q symmetric with smallest eigenvalue bounded below
    by ``-PSD_TOL * (1 + ||.||_2)``.
    """

    J: np.ndarray
    R: np.ndarray
    Q: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        J = _readonly(self.J)
        R = _readonly(self.R)
        Q = _readonly(self.Q)
        B = _readonly(self.B)
        if J.ndim != 2 or J.shape[0] != J.shape[1]:
            raise DimensionError(f"J must be square, got shape {J.shape}")
        n = J.shape[0]
        if B.ndim != 2 or B.shape[0] != n:
            raise DimensionError(f"B must be {n} x m, got shape {B.shape}")
        for name, M in (("R", R), ("Q", Q)):
            if M.shape != (n, n):
                raise DimensionError(f"{name} must be {n} x {n}, got {M.shape}")
        if np.max(np.abs(J + J.T), initial=0.0) > SKEW_TOL:
            raise InvariantError("J is not skew-symmetric")
        for name, M in (("R", R), ("Q", Q)):
            scale = 1.0 + np.max(np.abs(M), initial=0.0)
            if np.max(np.abs(M - M.T), initial=0.0) > SKEW_TOL * scale:
                raise InvariantError(f"{name} is not symmetric")
            w = np.linalg.eigvalsh(M)
            norm2 = np.max(np.abs(w), initial=0.0)
            if w.min(initial=0.0) < -PSD_TOL * (1.0 + norm2):
                raise InvariantError(
                    f"{name} is not positive semidefinite "
                    f"(min eigenvalue {w.min():.3e})"
                )
        object.__setattr__(self, "J", J)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "B", B)

    @property
    def n(self) -> int:
        return self.J.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    def dynamics_matrix(self) -> np.ndarray:
        """The state matrix (J - R) Q."""
        return (self.J - self.R) @ self.Q


def theta_length(n: int, m: int) -> int:
    """Length of the free-parameter vector for an order-n, m-port model."""
    return n * (3 * n + 1) // 2 + n * m


@dataclass(frozen=True)
class ThetaVector:
    """Unconstrained parameter vector, partitioned (J, R, Q, B) blocks.

    Block lengths are n(n-1)/2, n(n+1)/2, n(n+1)/2 and n*m; every real
    vector of the right total length is a valid parameter.
    """

    n: int
    m: int
    data: np.ndarray

    def __post_init__(self):
        data = _readonly(np.ravel(self.data))
        expected = theta_length(self.n, self.m)
        if data.size != expected:
            raise DimensionError(
                f"theta for n={self.n}, m={self.m} needs length {expected}, "
                f"got {data.size}"
            )
        object.__setattr__(self, "data", data)

    def __len__(self) -> int:
        return self.data.size

    @property
    def theta_j(self) -> np.ndarray:
        return self.data[: self.n * (self.n - 1) // 2]

    @property
    def theta_r(self) -> np.ndarray:
        a = self.n * (self.n - 1) // 2
        return self.data[a : a + self.n * (self.n + 1) // 2]

    @property
    def theta_q(self) -> np.ndarray:
        a = self.n * (self.n - 1) // 2 + self.n * (self.n + 1) // 2
        return self.data[a : a + self.n * (self.n + 1) // 2]

    @property
    def theta_b(self) -> np.ndarray:
        return self.data[self.n * (3 * self.n + 1) // 2 :]

    def with_data(self, data) -> "ThetaVector":
        """Same dimensions, new values."""
        return ThetaVector(self.n, self.m, data)


def vec_to_upper(v, n: int) -> np.ndarray:
    """Fill an upper-triangular n x n matrix from v, row by row.

    Row i receives columns i..n-1; the map is a bijection onto
    upper-triangular matrices.
    """
    v = np.asarray(v, dtype=float).ravel()
    if v.size != n * (n + 1) // 2:
        raise DimensionError(
            f"need {n * (n + 1) // 2} entries for an order-{n} upper "
            f"triangle, got {v.size}"
        )
    out = np.zeros((n, n))
    out[np.triu_indices(n)] = v
    return out


def vec_to_strict_upper(v, n: int) -> np.ndarray:
    """Fill a strictly upper-triangular n x n matrix from v, row by row."""
    v = np.asarray(v, dtype=float).ravel()
    if v.size != n * (n - 1) // 2:
        raise DimensionError(
            f"need {n * (n - 1) // 2} entries for an order-{n} strict upper "
            f"triangle, got {v.size}"
        )
    out = np.zeros((n, n))
    out[np.triu_indices(n, k=1)] = v
    return out


def vec_to_full(v, n: int, m: int) -> np.ndarray:
    """Reshape a vector of length n*m to an n x m matrix, column-major."""
    v = np.asarray(v, dtype=float).ravel()
    if v.size != n * m:
        raise DimensionError(f"need {n * m} entries for {n} x {m}, got {v.size}")
    return v.reshape((n, m), order="F")


def assemble_matrices(theta: ThetaVector):
    """(J, R, Q, B) from theta without constructing a validated PHSystem.

    J is skew and R, Q positive semidefinite by construction for every
    theta, so the validation in :class:`PHSystem` is redundant on this
    path; optimization loops use this directly.
    """
    n, m = theta.n, theta.m
    U_j = vec_to_strict_upper(theta.theta_j, n)
    U_r = vec_to_upper(theta.theta_r, n)
    U_q = vec_to_upper(theta.theta_q, n)
    J = U_j.T - U_j
    R = U_r.T @ U_r
    Q = U_q.T @ U_q
    B = vec_to_full(theta.theta_b, n, m)
    return J, R, Q, B


def assemble(theta: ThetaVector) -> PHSystem:
    """Build the port-Hamiltonian model encoded by theta."""
    J, R, Q, B = assemble_matrices(theta)
    return PHSystem(J, R, Q, B)


def _psd_upper_factor(M: np.ndarray, name: str) -> np.ndarray:
    """Upper-triangular U with U^T U = M for symmetric PSD M.

    Cholesky is the fast path and fixes the sign convention (positive
    diagonal). Semidefinite matrices fall back to an eigendecomposition
    followed by QR, which maps the zero matrix to the zero factor exactly.
    """
    n = M.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    try:
        return scipy.linalg.cholesky(M, lower=False)
    except np.linalg.LinAlgError:
        pass
    w, V = np.linalg.eigh(M)
    norm2 = np.max(np.abs(w), initial=0.0)
    if w.min(initial=0.0) < -PSD_TOL * (1.0 + norm2):
        raise InvariantError(
            f"{name} is indefinite (min eigenvalue {w.min():.3e}); "
            "cannot factor"
        )
    X = np.sqrt(np.clip(w, 0.0, None))[:, None] * V.T
    U = np.linalg.qr(X, mode="r")
    # Normalize so the diagonal is nonnegative (QR sign freedom).
    signs = np.where(np.diag(U) < 0.0, -1.0, 1.0)
    return signs[:, None] * U


def extract(system: PHSystem) -> ThetaVector:
    """Parameter vector reproducing the given model.

    Round trip: ``assemble(extract(sys))`` matches (J, R, Q, B) up to
    factorization round-off; the triangular factors of R and Q carry the
    usual positive-diagonal sign convention.
    """
    n, m = system.n, system.m
    theta_j = -system.J[np.triu_indices(n, k=1)]
    U_r = _psd_upper_factor(system.R, "R")
    U_q = _psd_upper_factor(system.Q, "Q")
    data = np.concatenate(
        [
            theta_j,
            U_r[np.triu_indices(n)],
            U_q[np.triu_indices(n)],
            system.B.ravel(order="F"),
        ]
    )
    return ThetaVector(n, m, data)


def transfer_eval(system: PHSystem, s: complex) -> np.ndarray:
    """Transfer function value H(s) = B^T Q (s I - (J - R) Q)^(-1) B.

    Uses an LU solve on the resolvent; no inverse is formed. Raises
    :class:`SingularResolventError` when the resolvent's reciprocal
    condition estimate falls below ``RCOND_FLOOR``.
    """
    n = system.n
    K = s * np.eye(n, dtype=complex) - system.dynamics_matrix()
    anorm = np.linalg.norm(K, 1)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            lu, piv = scipy.linalg.lu_factor(K)
    except np.linalg.LinAlgError as exc:
        raise SingularResolventError(s) from exc
    rcond, info = scipy.linalg.lapack.zgecon(lu, anorm)
    if info != 0 or not np.isfinite(rcond) or rcond < RCOND_FLOOR:
        raise SingularResolventError(s)
    X = scipy.linalg.lu_solve((lu, piv), system.B.astype(complex))
    return (system.Q @ system.B).T @ X


def batch_transfer(system: PHSystem, svals, chunk: int = 1024) -> np.ndarray:
    """Transfer function on a stack of points, shape (len(svals), m, m).

    Each point is an independent dense LU solve (LAPACK batched over the
    stack); results are bit-identical to solving points one at a time.
    """
    svals = np.asarray(svals, dtype=complex).ravel()
    n, m = system.n, system.m
    A = system.dynamics_matrix()
    QBt = (system.Q @ system.B).T
    eye = np.eye(n, dtype=complex)
    B = system.B.astype(complex)
    out = np.empty((svals.size, m, m), dtype=complex)
    for lo in range(0, svals.size, chunk):
        sl = svals[lo : lo + chunk]
        K = sl[:, None, None] * eye - A
        try:
            G = np.linalg.solve(K, np.broadcast_to(B, (sl.size, n, m)))
        except np.linalg.LinAlgError as exc:
            raise SingularResolventError(sl[0]) from exc
        out[lo : lo + sl.size] = QBt @ G
    bad = ~np.isfinite(out).all(axis=(1, 2))
    if bad.any():
        raise SingularResolventError(svals[np.argmax(bad)])
    return out


def hamiltonian(system: PHSystem, x) -> float:
    """Stored energy 0.5 x^T Q x; nonnegative for all states x."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size != system.n:
        raise DimensionError(f"state must have length {system.n}, got {x.size}")
    return 0.5 * float(x @ system.Q @ x)


def save_system(system: PHSystem, directory) -> None:
    """Write J.mtx, R.mtx, Q.mtx, B.mtx and a system.meta manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, M in (
        ("J", system.J),
        ("R", system.R),
        ("Q", system.Q),
        ("B", system.B),
    ):
        buf = io.BytesIO()
        scipy.io.mmwrite(buf, M, precision=17)
        (directory / f"{name}.mtx").write_bytes(buf.getvalue())
    (directory / "system.meta").write_text(f"n={system.n}\nm={system.m}\n")


def _read_meta(path: Path) -> dict:
    values = {}
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        key, _, val = line.partition("=")
        values[key.strip()] = val.strip()
    try:
        return {"n": int(values["n"]), "m": int(values["m"])}
    except (KeyError, ValueError) as exc:
        raise ValueError(f"malformed manifest {path}: {exc}") from exc


def load_system(directory) -> PHSystem:
    """Read a model written by :func:`save_system`.

    Parse failures name the offending file.
    """
    directory = Path(directory)
    meta = _read_meta(directory / "system.meta")
    mats = {}
    for name in ("J", "R", "Q", "B"):
        path = directory / f"{name}.mtx"
        try:
            mats[name] = np.asarray(scipy.io.mmread(path), dtype=float)
        except Exception as exc:
            raise ValueError(f"malformed matrix file {path}: {exc}") from exc
    system = PHSystem(mats["J"], mats["R"], mats["Q"], mats["B"])
    if system.n != meta["n"] or system.m != meta["m"]:
        raise ValueError(
            f"manifest {directory / 'system.meta'} disagrees with matrix "
            f"shapes: n={system.n}, m={system.m}"
        )
    return system

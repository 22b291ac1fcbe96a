"""Matrices over the torus algebra and spectral calculus on compressions.

Functions of selfadjoint elements (sqrt, log, exp, powers, inverses) are
evaluated by compressing left multiplication to a finite lattice box,
diagonalizing the resulting Hermitian matrix, applying the function to its
eigenvalues, and reading coefficients back off the cyclic vector(s).  The
compression of a selfadjoint element is exactly Hermitian because the
truncated Fourier basis is orthonormal and aligned with the coefficient
grid.  For an element supported in B_M and a polynomial of degree d the
readout is exact on the modes of B_{N-dM}; for analytic functions the
truncation error decays as the box grows, which the tests measure rather
than assume.

The determinant of a positive invertible matrix h over the algebra is
exp(Tr(log h)) with Tr the entrywise matrix trace; it is multiplicative
only under the commutation hypotheses checked by
``determinant_identities_check``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import permutations

import numpy as np

from .algebra import (
    AlgebraElement,
    LatticeBox,
    TorusGeometry,
    add,
    adjoint,
    commutator,
    multiply,
    resize,
    scale,
    selfadjoint_residual,
    trace,
)
from .errors import (
    GeometryMismatch,
    HypothesisViolated,
    NonSelfadjointInput,
    SpectralFloorViolation,
)

DEFAULT_SPECTRAL_FLOOR = 1e-8

# phase tables exp(i pi q.theta r) reused across compressions; keyed by
# (theta digest, n, radius), small LRU
_PHASE_CACHE = {}
_PHASE_CACHE_MAX = 8


def _phase_matrix(geometry, box):
    key = (geometry.digest, geometry.n, box.radius)
    hit = _PHASE_CACHE.get(key)
    if hit is not None:
        return hit
    modes = box.modes().astype(float)
    w = modes @ geometry.theta @ modes.T  # w[a, b] = a . theta b
    w = 0.5 * (w - w.T)  # enforce the exact antisymmetry (zero diagonal) of q.theta r
    phase = np.exp(1j * np.pi * w.T)  # [r, q] = exp(i pi q.theta r)
    if len(_PHASE_CACHE) >= _PHASE_CACHE_MAX:
        _PHASE_CACHE.pop(next(iter(_PHASE_CACHE)))
    _PHASE_CACHE[key] = phase
    return phase


@dataclass(frozen=True, eq=False)
class TorusMatrix:
    """m x m matrix with entries in the torus algebra."""

    geometry: TorusGeometry
    m: int
    entries: tuple

    def __post_init__(self):
        rows = tuple(tuple(row) for row in self.entries)
        if len(rows) != self.m or any(len(r) != self.m for r in rows):
            raise ValueError("entries must form an m x m grid")
        for row in rows:
            for e in row:
                if e.geometry != self.geometry:
                    raise GeometryMismatch("matrix entry on a different torus")
        object.__setattr__(self, "entries", rows)

    @classmethod
    def from_entries(cls, entries):
        entries = [list(row) for row in entries]
        return cls(entries[0][0].geometry, len(entries), entries)

    @classmethod
    def identity(cls, geometry, m, radius=0):
        one = AlgebraElement.identity(geometry, radius)
        zero = AlgebraElement.zeros(geometry, radius)
        return cls(geometry, m, [[one if i == j else zero for j in range(m)] for i in range(m)])

    @classmethod
    def from_scalar_matrix(cls, geometry, mat, radius=0):
        """Constant-coefficient matrix: each entry is a scalar multiple of 1."""
        mat = np.asarray(mat)
        m = mat.shape[0]
        return cls(
            geometry,
            m,
            [
                [
                    scale(AlgebraElement.identity(geometry, radius), complex(mat[i, j]))
                    for j in range(m)
                ]
                for i in range(m)
            ],
        )

    @classmethod
    def block_diag(cls, blocks):
        geometry = blocks[0].geometry
        m = sum(b.m for b in blocks)
        zero = AlgebraElement.zeros(geometry, 0)
        rows = [[zero] * m for _ in range(m)]
        at = 0
        for b in blocks:
            for i in range(b.m):
                for j in range(b.m):
                    rows[at + i][at + j] = b.entries[i][j]
            at += b.m
        return cls(geometry, m, rows)

    def entry(self, i, j):
        return self.entries[i][j]

    def max_radius(self):
        return max(e.box.radius for row in self.entries for e in row)

    def max_abs(self):
        return max(e.max_abs() for row in self.entries for e in row)

    def resize(self, radius):
        return TorusMatrix(
            self.geometry,
            self.m,
            [[resize(e, radius) for e in row] for row in self.entries],
        )

    def adjoint(self):
        return TorusMatrix(
            self.geometry,
            self.m,
            [[adjoint(self.entries[j][i]) for j in range(self.m)] for i in range(self.m)],
        )

    def selfadjoint_residual(self):
        adj = self.adjoint()
        return max(
            add(self.entries[i][j], scale(adj.entries[i][j], -1.0)).max_abs()
            for i in range(self.m)
            for j in range(self.m)
        )

    def __add__(self, other):
        if self.m != other.m:
            raise ValueError("matrix size mismatch")
        return TorusMatrix(
            self.geometry,
            self.m,
            [
                [add(self.entries[i][j], other.entries[i][j]) for j in range(self.m)]
                for i in range(self.m)
            ],
        )

    def __sub__(self, other):
        return self + other.scale(-1.0)

    def scale(self, c):
        return TorusMatrix(
            self.geometry,
            self.m,
            [[scale(e, c) for e in row] for row in self.entries],
        )

    def scale_element(self, k, side="left"):
        """Multiply every entry by an algebra element (entrywise k.g or g.k)."""
        op = (lambda e: multiply(k, e, mode="exact")) if side == "left" else (
            lambda e: multiply(e, k, mode="exact")
        )
        return TorusMatrix(self.geometry, self.m, [[op(e) for e in row] for row in self.entries])

    def matmul(self, other, mode="exact"):
        if self.m != other.m:
            raise ValueError("matrix size mismatch")
        m = self.m
        rows = []
        for i in range(m):
            row = []
            for j in range(m):
                acc = None
                for l in range(m):
                    t = multiply(self.entries[i][l], other.entries[l][j], mode=mode)
                    acc = t if acc is None else add(acc, t)
                row.append(acc)
            rows.append(row)
        return TorusMatrix(self.geometry, m, rows)

    def transpose(self):
        return TorusMatrix(
            self.geometry,
            self.m,
            [[self.entries[j][i] for j in range(self.m)] for i in range(self.m)],
        )


def compatibility_residual(a, b):
    """Max commutator coefficient over all entry pairs of two matrices."""
    worst = 0.0
    for row in a.entries:
        for x in row:
            for row2 in b.entries:
                for y in row2:
                    worst = max(worst, commutator(x, y, mode="exact").max_abs())
    return worst


def self_compatibility_residual(a):
    return compatibility_residual(a, a)


# ---------------------------------------------------------------------------
# compression
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CompressedOperator:
    """Dense matrix of an operator on the truncated Fourier basis.

    For an m x m matrix over the algebra the basis is e_i (x) V_k with the
    block index i slowest, so row/column i * |B_N| + index(k).
    """

    geometry: TorusGeometry
    box: LatticeBox
    m: int
    matrix: np.ndarray
    provenance: str = ""

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=complex)
        dim = self.m * self.box.size
        if mat.shape != (dim, dim):
            raise ValueError(f"matrix shape {mat.shape} != ({dim}, {dim})")
        object.__setattr__(self, "matrix", mat)

    @property
    def dim(self):
        return self.m * self.box.size

    def hermitian_residual(self):
        scale_ = max(1.0, float(np.max(np.abs(self.matrix))))
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T))) / scale_


def _compress_element_matrix(x, box):
    """Dense matrix of left multiplication by x on span{V_k : k in box}."""
    modes = box.modes()
    n = x.geometry.n
    r = x.box.radius
    diff = modes[:, None, :] - modes[None, :, :]  # [row, col, axis] = r - q
    inside = np.all(np.abs(diff) <= r, axis=2)
    offsets = np.clip(diff + r, 0, 2 * r)
    flat = np.ravel_multi_index(
        tuple(offsets[..., j] for j in range(n)), x.box.shape
    )
    vals = x.table.ravel()[flat]
    vals[~inside] = 0.0
    return vals * _phase_matrix(x.geometry, box)


def compress(x, box):
    """Compressed left-multiplication operator of an element or matrix.

    The compression is exactly Hermitian when x is selfadjoint.  For modes
    near the box boundary the product leaves the box, so only matrix
    elements with row index in the interior are those of the full operator.
    """
    if isinstance(x, AlgebraElement):
        return CompressedOperator(
            x.geometry, box, 1, _compress_element_matrix(x, box), provenance="element"
        )
    m = x.m
    s = box.size
    mat = np.zeros((m * s, m * s), dtype=complex)
    for i in range(m):
        for j in range(m):
            entry = x.entries[i][j]
            if entry.max_abs() == 0.0:
                continue
            mat[i * s : (i + 1) * s, j * s : (j + 1) * s] = _compress_element_matrix(
                entry, box
            )
    return CompressedOperator(x.geometry, box, m, mat, provenance="matrix")


def coefficient_vector(x, box):
    """Flatten coefficients into the enumeration of a (possibly larger) box."""
    if isinstance(x, AlgebraElement):
        return resize(x, box.radius).vector()
    return np.concatenate([resize(e, box.radius).vector() for e in x.entries])


def element_from_vector(geometry, box, vec):
    return AlgebraElement(geometry, box, np.asarray(vec, dtype=complex).reshape(box.shape))


def apply_operator(op, x):
    """Apply a compressed operator to an element (or m-component column)."""
    if isinstance(x, AlgebraElement):
        if op.m != 1:
            raise ValueError("operator acts on matrix columns, not elements")
        return element_from_vector(op.geometry, op.box, op.matrix @ coefficient_vector(x, op.box))
    vec = op.matrix @ coefficient_vector(x, op.box)
    s = op.box.size
    return [element_from_vector(op.geometry, op.box, vec[i * s : (i + 1) * s]) for i in range(op.m)]


# ---------------------------------------------------------------------------
# functional calculus
# ---------------------------------------------------------------------------

_SINGULAR_AT_ZERO = {"sqrt", "inv_sqrt", "log", "inv", "pow"}


def _resolve_function(fn):
    """Map a function spec to (name, vectorized callable, needs_floor)."""
    if callable(fn):
        return getattr(fn, "__name__", "callable"), fn, False
    if isinstance(fn, tuple) and len(fn) == 2 and fn[0] == "pow":
        s = float(fn[1])
        return f"pow({s})", (lambda lam: lam**s), True
    table = {
        "sqrt": np.sqrt,
        "inv_sqrt": lambda lam: 1.0 / np.sqrt(lam),
        "log": np.log,
        "exp": np.exp,
        "inv": lambda lam: 1.0 / lam,
    }
    if fn not in table:
        raise ValueError(f"unknown function {fn!r}")
    return fn, table[fn], fn in _SINGULAR_AT_ZERO


def _require_selfadjoint(x):
    if isinstance(x, AlgebraElement):
        resid = selfadjoint_residual(x)
        scale_ = 1.0 + x.max_abs()
    else:
        resid = x.selfadjoint_residual()
        scale_ = 1.0 + x.max_abs()
    if resid > 1e-11 * scale_:
        raise NonSelfadjointInput(f"selfadjointness residual {resid:.3e}")


def _eigendecomposition(x, box):
    op = compress(x, box)
    lam, vecs = np.linalg.eigh(op.matrix)
    return op, lam, vecs


def functional_calculus(x, fn, box, spectral_floor=DEFAULT_SPECTRAL_FLOOR):
    """f(x) for selfadjoint x via the Hermitian compression on the box.

    fn is one of "sqrt", "inv_sqrt", "log", "exp", "inv", ("pow", s), or a
    vectorized callable on eigenvalues.  Functions singular at 0 refuse
    inputs whose compressed spectrum dips below the floor.  The result lives
    on the compression box; callers clip as needed.
    """
    name, f, needs_floor = _resolve_function(fn)
    _require_selfadjoint(x)
    op, lam, vecs = _eigendecomposition(x, box)
    if needs_floor and lam.min() < spectral_floor:
        raise SpectralFloorViolation(
            f"{name}: compressed spectrum reaches {lam.min():.3e} < floor {spectral_floor:.1e}"
        )
    fvals = np.asarray(f(lam), dtype=complex)
    # f real on the spectrum of a selfadjoint input makes f(x) selfadjoint;
    # averaging with the adjoint clears readout roundoff off the real subspace
    if isinstance(x, AlgebraElement):
        i0 = box.index_of(np.zeros(x.geometry.n, dtype=int))
        col = vecs @ (fvals * vecs[i0].conj())
        out = element_from_vector(x.geometry, box, col)
        return scale(add(out, adjoint(out)), 0.5)
    s = box.size
    i0 = box.index_of(np.zeros(x.geometry.n, dtype=int))
    cols = []
    for j in range(x.m):
        col = vecs @ (fvals * vecs[j * s + i0].conj())
        cols.append(col)
    entries = [
        [
            element_from_vector(x.geometry, box, cols[j][i * s : (i + 1) * s])
            for j in range(x.m)
        ]
        for i in range(x.m)
    ]
    out = TorusMatrix(x.geometry, x.m, entries)
    return TorusMatrix(
        x.geometry,
        x.m,
        [
            [
                scale(add(out.entries[i][j], adjoint(out.entries[j][i])), 0.5)
                for j in range(x.m)
            ]
            for i in range(x.m)
        ],
    )


def spectral_bounds(x, box):
    """Extreme eigenvalues of the compression of a selfadjoint input.

    The compressed minimum can only overestimate the true one (compression
    to a subspace raises the bottom of the spectrum), so a positive value
    is a diagnostic, not a proof of positivity.
    """
    _require_selfadjoint(x)
    _, lam, _ = _eigendecomposition(x, box)
    return float(lam.min()), float(lam.max())


def matrix_inverse(h, box, spectral_floor=DEFAULT_SPECTRAL_FLOOR):
    return functional_calculus(h, "inv", box, spectral_floor=spectral_floor)


# ---------------------------------------------------------------------------
# positivity witnesses
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PositivityCertificate:
    """Witness y and constant c > 0 asserting x = y* y + c."""

    witness: object
    constant: float


def make_positive(y, c):
    """Return (y* y + c, certificate); positive with compressed spectrum >= c."""
    if c <= 0:
        raise ValueError("constant must be positive")
    if isinstance(y, AlgebraElement):
        x = add(
            multiply(adjoint(y), y, mode="exact"),
            scale(AlgebraElement.identity(y.geometry), c),
        )
    else:
        x = y.adjoint().matmul(y, mode="exact") + TorusMatrix.identity(
            y.geometry, y.m
        ).scale(c)
    return x, PositivityCertificate(y, float(c))


def certificate_residual(certificate, x):
    """Max coefficient error of the reconstruction y* y + c against x."""
    rebuilt, _ = make_positive(certificate.witness, certificate.constant)
    if isinstance(x, AlgebraElement):
        r = max(x.box.radius, rebuilt.box.radius)
        return add(resize(x, r), scale(resize(rebuilt, r), -1.0)).max_abs()
    r = max(x.max_radius(), rebuilt.max_radius())
    return (x.resize(r) - rebuilt.resize(r)).max_abs()


# ---------------------------------------------------------------------------
# Newton refinement in the algebra (used to tighten density power families)
# ---------------------------------------------------------------------------


def refine_inverse(x, guess, radius, tol=1e-13, max_iter=40):
    """Polish an approximate inverse by X <- X + X(1 - xX), clipped per step.

    Returns (X, residual) with residual = max coefficient of xX - 1 after the
    final clip.  Quadratically convergent once the starting residual is < 1
    in the l1 coefficient norm; the attainable residual is limited by the
    decay of the true inverse at the cap radius.
    """
    one = AlgebraElement.identity(x.geometry)
    X = resize(guess, radius)
    best, best_res = X, np.inf
    for _ in range(max_iter):
        r = resize(add(one, scale(multiply(x, X, mode="exact"), -1.0)), radius)
        res = r.max_abs()
        if res < best_res:
            best, best_res = X, res
        if res <= tol or res >= best_res * 4.0:
            break
        X = resize(add(X, multiply(X, r, mode="exact")), radius)
    r = add(one, scale(multiply(x, best, mode="exact"), -1.0))
    return best, r.max_abs()


def refine_inverse_sqrt(x, guess, radius, tol=1e-13, max_iter=60):
    """Polish an approximate inverse square root by Z <- Z(3 - xZ^2)/2.

    All iterates commute with x (they are series in the same element), so the
    scalar Newton-Schulz map applies verbatim.  Returns (Z, residual) with
    residual = max coefficient of xZ^2 - 1.
    """
    one = AlgebraElement.identity(x.geometry)
    Z = resize(guess, radius)
    best, best_res = Z, np.inf
    for _ in range(max_iter):
        xz2 = multiply(x, multiply(Z, Z, mode="exact"), mode="exact")
        r = resize(add(one, scale(xz2, -1.0)), radius)
        res = r.max_abs()
        if res < best_res:
            best, best_res = Z, res
        if res <= tol or res >= best_res * 4.0:
            break
        Z = resize(add(Z, scale(multiply(Z, r, mode="exact"), 0.5)), radius)
    xz2 = multiply(x, multiply(best, best, mode="exact"), mode="exact")
    res = add(one, scale(xz2, -1.0)).max_abs()
    return best, res


# ---------------------------------------------------------------------------
# trace and determinant
# ---------------------------------------------------------------------------


def matrix_trace(h):
    """Entrywise matrix trace Tr(h) = sum_i h_ii, an algebra element.

    Not tracial on matrices over a noncommutative algebra: Tr(hk) and
    Tr(kh) differ in general.
    """
    acc = h.entries[0][0]
    for i in range(1, h.m):
        acc = add(acc, h.entries[i][i])
    return acc


def determinant(h, box, spectral_floor=DEFAULT_SPECTRAL_FLOOR):
    """det(h) = exp(Tr(log h)) for positive invertible h; a positive element."""
    logh = functional_calculus(h, "log", box, spectral_floor=spectral_floor)
    return functional_calculus(matrix_trace(logh), "exp", box)


def leibniz_determinant(h, mode="exact"):
    """Permutation expansion sum_s sign(s) h_{0 s(0)} ... h_{m-1 s(m-1)}.

    Matches exp(Tr(log h)) only for self-compatible matrices, where the
    entries generate a commutative algebra.
    """
    m = h.m
    acc = None
    for perm in permutations(range(m)):
        sign = 1
        seen = [False] * m
        for i in range(m):
            if seen[i]:
                continue
            j, length = i, 0
            while not seen[j]:
                seen[j] = True
                j = perm[j]
                length += 1
            if length % 2 == 0:
                sign = -sign
        term = h.entries[0][perm[0]]
        for i in range(1, m):
            term = multiply(term, h.entries[i][perm[i]], mode=mode)
        term = scale(term, sign)
        acc = term if acc is None else add(acc, term)
    return acc


def _difference(a, b):
    r = max(a.box.radius, b.box.radius)
    return add(resize(a, r), scale(resize(b, r), -1.0)).max_abs()


def determinant_identities_check(
    h,
    other=None,
    conjugator=None,
    box=None,
    compat_tol=1e-9,
    spectral_floor=DEFAULT_SPECTRAL_FLOOR,
):
    """Residuals of the determinant identities that hold under compatibility.

    Checks, as applicable: [det h, det h'] = 0 and det(hh') = det(h)det(h')
    for compatible commuting h, h'; det(u* h u) = det(u*u) det(h) for a
    compatible self-compatible conjugator u.  Raises HypothesisViolated when
    a commutation hypothesis fails at compat_tol, reporting the measured
    residuals.
    """
    if box is None:
        raise ValueError("box required")
    report = {}
    det_h = determinant(h, box, spectral_floor)
    if other is not None:
        hyp = {
            "compatible(h,h')": compatibility_residual(h, other),
            "[h,h']": (h.matmul(other, "exact") - other.matmul(h, "exact")).max_abs(),
        }
        bad = {k: v for k, v in hyp.items() if v > compat_tol}
        if bad:
            raise HypothesisViolated(f"determinant product hypotheses failed: {bad}", hyp)
        det_o = determinant(other, box, spectral_floor)
        report["det_commutator"] = commutator(det_h, det_o).max_abs()
        det_prod = determinant(h.matmul(other, "exact"), box, spectral_floor)
        report["product_multiplicativity"] = _difference(
            det_prod, multiply(det_h, det_o, mode="exact")
        )
    if conjugator is not None:
        u = conjugator
        hyp = {
            "compatible(h,u)": compatibility_residual(h, u),
            "self_compatible(u)": self_compatibility_residual(u),
            "compatible(u,u*)": compatibility_residual(u, u.adjoint()),
        }
        bad = {k: v for k, v in hyp.items() if v > compat_tol}
        if bad:
            raise HypothesisViolated(f"determinant conjugation hypotheses failed: {bad}", hyp)
        uhu = u.adjoint().matmul(h, "exact").matmul(u, "exact")
        det_uhu = determinant(uhu, box, spectral_floor)
        det_uu = determinant(u.adjoint().matmul(u, "exact"), box, spectral_floor)
        report["conjugation"] = _difference(
            det_uhu, multiply(det_uu, det_h, mode="exact")
        )
    return report


def block_determinant_residual(blocks, box, compat_tol=1e-9, spectral_floor=DEFAULT_SPECTRAL_FLOOR):
    """Residual of det(blockdiag) = product of block determinants."""
    for i in range(len(blocks)):
        for j in range(i + 1, len(blocks)):
            r = compatibility_residual(blocks[i], blocks[j])
            if r > compat_tol:
                raise HypothesisViolated(
                    f"blocks {i},{j} not compatible (residual {r:.3e})",
                    {"compatibility": r},
                )
    full = determinant(TorusMatrix.block_diag(blocks), box, spectral_floor)
    prod = None
    for b in blocks:
        d = determinant(b, box, spectral_floor)
        prod = d if prod is None else multiply(prod, d, mode="exact")
    return _difference(full, prod)


def unit_ball_volume(n):
    return math.pi ** (n / 2.0) / math.gamma(n / 2.0 + 1.0)

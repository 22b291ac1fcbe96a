"""Laplace-Beltrami operators on the truncated Fourier basis.

The operator associated with a Hermitian metric h and a density nu is

    L(u) = -nu^{-1} sum_ij d_i( nu^{1/2} h^{ij} nu^{1/2} d_j(u) ),

assembled as the dense composition  -M(nu^{-1}) . sum_ij D_i M(a_ij) D_j
with D_j the diagonal derivation matrix (i k_j) and a_ij the composite
multipliers nu^{1/2} h^{ij} nu^{1/2}.  Every term ends in a derivation, so
constants are killed exactly.  Conjugating by left multiplication with
nu^{1/2} moves the operator to the standard inner product, where it is
symmetric up to truncation; the recorded asymmetry of T = S L S^{-1} is the
truncation-health metric, and the Hermitian eigensolve runs on (T + T*)/2.

Truncation error is measured, not assumed: every spectrum is computed at
two box radii and only eigenvalues matched across both (monotone pairing of
the sorted lists, relative tolerance) are flagged stable.  Multipliers may
be clipped to a radius M <= N/4, which keeps rows indexed by B_{N-2M}
exactly those of the (clipped-coefficient) operator; identity checks that
need tighter agreement run unclipped and restrict to interior rows, where
the only leakage is the product of two coefficient tails.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from . import calculus as calc
from .algebra import (
    AlgebraElement,
    LatticeBox,
    add,
    adjoint,
    commutator,
    derivation,
    inner_product,
    multiply,
    resize,
    scale,
    trace,
    weighted_inner_product_opp,
)
from .calculus import (
    DEFAULT_SPECTRAL_FLOOR,
    TorusMatrix,
    compress,
    element_from_vector,
    functional_calculus,
    spectral_bounds,
    unit_ball_volume,
)
from .errors import (
    BoxTooSmall,
    HypothesisViolated,
    UnstableSpectrum,
    WindowOutOfRange,
)
from .metrics import (
    Density,
    RiemannianMetric,
    as_density,
    density_from_element,
    riemannian_density,
    volume,
)


def _clip(x, radius):
    if radius is None or x.box.radius <= radius:
        return x
    return resize(x, radius)


def interior_indices(box, inner_radius):
    """Enumeration indices of modes with sup-norm at most inner_radius."""
    modes = box.modes()
    return np.where(np.max(np.abs(modes), axis=1) <= inner_radius)[0]


@dataclass(frozen=True, eq=False)
class LaplaceBeltramiOperator:
    """Assembled operator with its multiplier family and conjugated form."""

    geometry: object
    box: LatticeBox
    mult_radius: object  # int or None (unclipped)
    h: TorusMatrix
    h_inv: TorusMatrix
    nu: Density
    prefactor: AlgebraElement  # nu^{-1}, clipped per policy
    sqrt_factor: AlgebraElement  # nu^{1/2}, clipped per policy
    multipliers: tuple  # a_ij = nu^{1/2} h^{ij} nu^{1/2}, clipped per policy
    matrix: np.ndarray
    conjugated: np.ndarray  # T = S matrix S^{-1}
    conjugator: np.ndarray  # S = M(nu^{1/2})
    asymmetry: float
    self_compatible_residual: float = np.nan

    @property
    def symmetrized(self):
        return 0.5 * (self.conjugated + self.conjugated.conj().T)

    def apply(self, u):
        vec = self.matrix @ resize(u, self.box.radius).vector()
        return element_from_vector(self.geometry, self.box, vec)

    def apply_exact(self, u):
        """Element-level application via exact products of the multipliers."""
        acc = None
        n = self.geometry.n
        for i in range(n):
            for j in range(n):
                t = derivation(
                    multiply(self.multipliers[i][j], derivation(u, j), "exact"), i
                )
                acc = t if acc is None else add(acc, t)
        return scale(multiply(self.prefactor, acc, "exact"), -1.0)


def _build_matrices(prefactor, sqrt_factor, multipliers, box):
    geometry = prefactor.geometry
    n = geometry.n
    modes = box.modes()
    core = np.zeros((box.size, box.size), dtype=complex)
    for i in range(n):
        di = 1j * modes[:, i].astype(float)
        for j in range(n):
            dj = 1j * modes[:, j].astype(float)
            a = compress(multipliers[i][j], box).matrix
            core += di[:, None] * a * dj[None, :]
    mat = -(compress(prefactor, box).matrix @ core)
    s_mat = compress(sqrt_factor, box).matrix
    t = np.linalg.solve(s_mat.T, (s_mat @ mat).T).T  # S mat S^{-1}
    denom = float(np.linalg.norm(t)) or 1.0
    asym = float(np.linalg.norm(t - t.conj().T)) / denom
    return mat, t, s_mat, asym


def assemble(
    h,
    nu,
    box,
    mult_radius=None,
    calc_box=None,
    h_inv=None,
    spectral_floor=DEFAULT_SPECTRAL_FLOOR,
):
    """Assemble the operator for a Hermitian metric matrix and a density.

    mult_radius clips the derived multiplier elements; it must satisfy
    4 * mult_radius <= box radius so the interior rows stay exact.  With
    mult_radius=None the multipliers keep their full support, which
    identity checks require.  h may be a validated RiemannianMetric (its
    stored inverse is reused) or a raw positive matrix (inverted on
    calc_box, default the working box).
    """
    if mult_radius is not None and 4 * mult_radius > box.radius:
        raise BoxTooSmall(
            f"multiplier radius {mult_radius} too large for box radius {box.radius}"
        )
    calc_box = calc_box or box
    if isinstance(h, RiemannianMetric):
        h_inv = h_inv or h.inverse
        h = h.matrix
    if h.m != h.geometry.n:
        raise ValueError(f"metric for the Laplacian must be {h.geometry.n} x {h.geometry.n}")
    if h_inv is None:
        h_inv = calc.matrix_inverse(h, calc_box, spectral_floor=spectral_floor)
    dens = as_density(nu, calc_box, spectral_floor=spectral_floor)
    n = h.geometry.n
    sqrt_f = _clip(dens.sqrt_nu, mult_radius)
    pref = _clip(dens.inv_nu, mult_radius)
    mult = tuple(
        tuple(
            _clip(
                multiply(
                    multiply(dens.sqrt_nu, h_inv.entries[i][j], "exact"),
                    dens.sqrt_nu,
                    "exact",
                ),
                mult_radius,
            )
            for j in range(n)
        )
        for i in range(n)
    )
    mat, t, s_mat, asym = _build_matrices(pref, sqrt_f, mult, box)
    return LaplaceBeltramiOperator(
        h.geometry, box, mult_radius, h, h_inv, dens, pref, sqrt_f, mult,
        mat, t, s_mat, asym,
    )


def assemble_riemannian(
    g,
    box,
    mult_radius=None,
    calc_box=None,
    spectral_floor=DEFAULT_SPECTRAL_FLOOR,
    self_compat_tol=1e-10,
    density=None,
):
    """Operator of a validated metric: h^{ij} = g^{ij}, nu = sqrt(det g).

    A precomputed Density may be supplied when the volume element is known
    in closed form (conformal powers, constant metrics); otherwise it is
    computed from the determinant.  For a self-compatible metric the
    commuted assembly -det^{-1/2} sum d_i(det^{1/2} g^{ij} d_j) must agree;
    its interior-row residual is computed and stored.
    """
    calc_box = calc_box or g.box
    dens = density or riemannian_density(g, box=calc_box, spectral_floor=spectral_floor)
    op = assemble(
        g,
        dens,
        box,
        mult_radius=mult_radius,
        calc_box=calc_box,
        spectral_floor=spectral_floor,
    )
    resid = np.nan
    if g.is_self_compatible(tol=self_compat_tol):
        n = g.geometry.n
        b = tuple(
            tuple(
                _clip(multiply(dens.nu, g.inverse.entries[i][j], "exact"), mult_radius)
                for j in range(n)
            )
            for i in range(n)
        )
        mat2, _, _, _ = _build_matrices(op.prefactor, op.sqrt_factor, b, box)
        margin = box.radius // 2
        rows = interior_indices(box, margin)
        resid = float(np.max(np.abs((op.matrix - mat2)[rows])))
    return replace(op, self_compatible_residual=resid)


# ---------------------------------------------------------------------------
# spectra
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpectrumResult:
    """Sorted eigenvalues with stability flags from a two-box comparison."""

    geometry: object
    box: LatticeBox
    stability_box: LatticeBox
    eigenvalues: np.ndarray
    stable: np.ndarray
    multiplicity_group: np.ndarray
    eigenvectors: np.ndarray  # columns, coefficient tables on box
    asymmetry: float
    stability_asymmetry: float

    @property
    def stable_eigenvalues(self):
        return self.eigenvalues[self.stable]

    def stable_count(self):
        return int(np.sum(self.stable))

    def eigenvector(self, i):
        return element_from_vector(self.geometry, self.box, self.eigenvectors[:, i])

    def multiplicity_of(self, value, tol=1e-6):
        lam = self.stable_eigenvalues
        return int(np.sum(np.abs(lam - value) <= tol * (1.0 + abs(value))))


def _group_multiplicities(lam, tol):
    group = np.zeros(lam.shape, dtype=int)
    gid = 0
    for i in range(1, lam.size):
        if lam[i] - lam[i - 1] > tol * (1.0 + abs(lam[i])):
            gid += 1
        group[i] = gid
    return group


def spectrum(
    op,
    count=None,
    stability_radius=None,
    rel_tol=1e-3,
    multiplicity_tol=1e-6,
    asymmetry_threshold=0.1,
):
    """Eigenvalues of the symmetrized conjugated operator, with stability flags.

    The same multiplier family is recompressed on a larger box (default
    radius + 2) and the sorted spectra are paired by index; an eigenvalue is
    stable when the pair agrees to rel_tol relative accuracy.  Eigenvectors
    are returned in the coefficient basis (columns of S^{-1} W).  Raises
    UnstableSpectrum if fewer than count eigenvalues stabilize, or when the
    recorded asymmetry exceeds the threshold.
    """
    if op.asymmetry > asymmetry_threshold:
        raise UnstableSpectrum(
            f"asymmetry {op.asymmetry:.3e} above threshold {asymmetry_threshold:.1e}"
        )
    if stability_radius is None:
        stability_radius = op.box.radius + 2
    big_box = LatticeBox(op.geometry.n, stability_radius)
    _, t2, _, asym2 = _build_matrices(
        op.prefactor, op.sqrt_factor, op.multipliers, big_box
    )
    lam2 = np.linalg.eigvalsh(0.5 * (t2 + t2.conj().T))
    lam, w = np.linalg.eigh(op.symmetrized)
    vecs = np.linalg.solve(op.conjugator, w)
    m = min(lam.size, lam2.size)
    stable = np.zeros(lam.shape, dtype=bool)
    pair_diff = np.abs(lam[:m] - lam2[:m])
    stable[:m] = pair_diff <= rel_tol * (1.0 + np.maximum(np.abs(lam[:m]), np.abs(lam2[:m])))
    # stability is a prefix property: past the first mismatch the index
    # pairing of the two sorted lists is no longer meaningful
    bad = np.where(~stable)[0]
    if bad.size:
        stable[bad[0]:] = False
    if count is not None and int(np.sum(stable)) < count:
        raise UnstableSpectrum(
            f"only {int(np.sum(stable))} of {count} requested eigenvalues stabilized"
        )
    groups = _group_multiplicities(lam, multiplicity_tol)
    return SpectrumResult(
        op.geometry, op.box, big_box, lam, stable, groups, vecs, op.asymmetry, asym2
    )


def generalized_spectrum(op):
    """Cross-check path: solve M(L) v = lambda G v with Gram matrix G = M(nu).

    The Gram matrix of the basis in the density-twisted inner product is the
    compression of left multiplication by nu, so the operator's symmetry is
    equivalent to the Hermitianness of G M(L); both are spoiled only near
    the box boundary.
    """
    g_mat = compress(op.nu.nu, op.box).matrix
    g_mat = 0.5 * (g_mat + g_mat.conj().T)
    a = g_mat @ op.matrix
    a = 0.5 * (a + a.conj().T)
    return scipy.linalg.eigh(a, g_mat, eigvals_only=True)


def eigenvector_shell_decay(result, i):
    """Max outer-shell coefficient of eigenvector i relative to its peak.

    Smooth eigenvectors of an elliptic operator decay rapidly in Fourier
    modes; a small value certifies the vector is resolved by the box.
    """
    table = np.abs(result.eigenvectors[:, i].reshape(result.box.shape))
    peak = float(table.max()) or 1.0
    inner = tuple(slice(1, -1) for _ in range(result.box.n))
    shell = table.copy()
    shell[inner] = 0.0
    return float(shell.max()) / peak


def reliable_indices(result, shell_tol=1e-6):
    """Stable eigenvalues whose eigenvectors pass the shell-decay proxy."""
    idx = np.where(result.stable)[0]
    return np.array(
        [i for i in idx if eigenvector_shell_decay(result, i) <= shell_tol], dtype=int
    )


def eigenbasis_gram_residual(op, result, count=None, indices=None):
    """Deviation from orthonormality in the density-twisted inner product.

    Measured against an independently compressed Gram matrix M(L_nu); the
    eigenvectors are exactly orthonormal for M(sqrt)* M(sqrt), so the
    residual is the truncation gap between the two, weighted by the
    eigenvector mass near the boundary.
    """
    if indices is None:
        indices = np.where(result.stable)[0]
        if count is not None:
            indices = indices[:count]
    g_mat = compress(op.nu.nu, op.box).matrix
    v = result.eigenvectors[:, indices]
    gram = v.conj().T @ g_mat @ v
    return float(np.max(np.abs(gram - np.eye(len(indices)))))


def green_identity_residual(op, u, v):
    """|<L u, v>_nu^o - sum_ij tau((d_i v)* a_ij d_j u)| via the matrix path."""
    lu = op.apply(u)
    lhs = weighted_inner_product_opp(lu, v, op.nu.nu)
    rhs = 0.0 + 0.0j
    n = op.geometry.n
    du = [derivation(u, j) for j in range(n)]
    dv = [derivation(v, i) for i in range(n)]
    for i in range(n):
        for j in range(n):
            rhs += inner_product(multiply(op.multipliers[i][j], du[j], "exact"), dv[i])
    return abs(lhs - rhs)


def principal_symbol_bounds(op, samples=16, calc_box=None):
    """Min/max compressed eigenvalues of (xi, xi)_{h^{-1}} over unit xi.

    The principal symbol is similar to this element, so invertibility along
    the sample grid certifies ellipticity at the truncated level.
    """
    calc_box = calc_box or LatticeBox(op.geometry.n, max(4, op.box.radius // 2))
    lo_worst, hi_worst = np.inf, -np.inf
    for xi in _sphere_nodes(op.geometry.n, samples)[0]:
        s = None
        for i in range(op.geometry.n):
            for j in range(op.geometry.n):
                t = scale(op.h_inv.entries[i][j], xi[i] * xi[j])
                s = t if s is None else add(s, t)
        s = scale(add(s, adjoint(s)), 0.5)
        lo, hi = spectral_bounds(s, calc_box)
        lo_worst, hi_worst = min(lo_worst, lo), max(hi_worst, hi)
    return lo_worst, hi_worst


# ---------------------------------------------------------------------------
# conformal covariance
# ---------------------------------------------------------------------------


def conformally_deformed_flat_matrix(k, box, calc_box=None, spectral_floor=DEFAULT_SPECTRAL_FLOOR):
    """Hermitian matrix of k^{-1} (flat Laplacian) k^{-1} on the box.

    This is the conformally deformed flat operator on the plain Hilbert
    space; for the metric k^2 delta_ij it is unitarily equivalent to the
    Laplace-Beltrami operator, so stable spectra must match.
    """
    calc_box = calc_box or box
    dk = density_from_element(k, calc_box, spectral_floor=spectral_floor)
    k_inv_mat = compress(dk.inv_nu, box).matrix
    k2 = (np.abs(box.modes()) ** 2).sum(axis=1).astype(float)
    return k_inv_mat @ (k2[:, None] * k_inv_mat)


def _integer_power(x, p):
    out = AlgebraElement.identity(x.geometry)
    for _ in range(p):
        out = multiply(out, x, "exact")
    return out


def conformal_covariance_check(
    g,
    k,
    box,
    calc_box=None,
    commute_tol=1e-9,
    spectral_floor=DEFAULT_SPECTRAL_FLOOR,
    ghat=None,
    nu_g=None,
    nu_ghat=None,
    k_density=None,
):
    """Residual of the conformal transformation law for ghat = k g k.

    For commuting (k, g) the transformed operator satisfies

        L_ghat = k^{-2} L_g - nu(g)^{-1} k^{-n} sum_ij d_i(k^{n-2}) a_ij d_j

    with a_ij the multipliers of L_g; in two dimensions the gradient
    correction vanishes identically.  Both sides are assembled independently
    (no multiplier clipping) and compared on interior rows, where box-exit
    leakage is a product of two coefficient tails.  Raises
    HypothesisViolated when [k, g] fails at commute_tol.

    Closed-form ingredients (the deformed metric with its inverse, either
    volume element, the power family of k) may be passed in when available;
    anything omitted is computed from the spectral calculus.
    """
    calc_box = calc_box or (g.box if isinstance(g, RiemannianMetric) else box)
    g_mat = g.matrix if isinstance(g, RiemannianMetric) else g
    n = g_mat.geometry.n
    comm = max(
        commutator(k, e, "exact").max_abs() for row in g_mat.entries for e in row
    )
    if comm > commute_tol * (1.0 + k.max_abs() * (1.0 + g_mat.max_abs())):
        raise HypothesisViolated(f"[k, g] != 0 (residual {comm:.3e})", {"[k,g]": comm})

    from .metrics import metric_conformal, validate_metric

    if not isinstance(g, RiemannianMetric):
        g = validate_metric(g_mat, calc_box, spectral_floor=spectral_floor)
    if ghat is None:
        ghat = metric_conformal(g, k, calc_box, spectral_floor=spectral_floor)

    op_g = assemble_riemannian(
        g, box, calc_box=calc_box, spectral_floor=spectral_floor, density=nu_g
    )
    op_hat = assemble_riemannian(
        ghat, box, calc_box=calc_box, spectral_floor=spectral_floor, density=nu_ghat
    )

    if k_density is None:
        k_density = density_from_element(k, calc_box, spectral_floor=spectral_floor)
    k_inv_2 = multiply(k_density.inv_nu, k_density.inv_nu, "exact")
    rhs = compress(k_inv_2, box).matrix @ op_g.matrix

    report = {"commutator": comm, "asymmetry_g": op_g.asymmetry, "asymmetry_ghat": op_hat.asymmetry}
    margin = box.radius // 2
    rows = interior_indices(box, margin)
    if n == 2:
        report["two_dim_residual"] = float(
            np.max(np.abs((op_hat.matrix - rhs)[rows]))
        )
        return report

    # gradient correction: sum_j M(c_j) D_j with
    # c_j = nu^{-1} k^{-n} sum_i d_i(k^{n-2}) a_ij
    k_inv_n = _integer_power(k_density.inv_nu, n)
    k_pow = _integer_power(k, n - 2)
    modes = box.modes()
    corr = np.zeros((box.size, box.size), dtype=complex)
    for j in range(n):
        c = None
        for i in range(n):
            t = multiply(derivation(k_pow, i), op_g.multipliers[i][j], "exact")
            c = t if c is None else add(c, t)
        c = multiply(multiply(op_g.nu.inv_nu, k_inv_n, "exact"), c, "exact")
        dj = 1j * modes[:, j].astype(float)
        corr += compress(c, box).matrix * dj[None, :]
    report["full_law_residual"] = float(
        np.max(np.abs((op_hat.matrix - (rhs - corr))[rows]))
    )
    return report


# ---------------------------------------------------------------------------
# Weyl law harness
# ---------------------------------------------------------------------------


def _sphere_nodes(n, points):
    """Quadrature nodes and weights on the unit sphere S^{n-1}."""
    if n == 2:
        angles = 2.0 * np.pi * np.arange(points) / points
        nodes = np.stack([np.cos(angles), np.sin(angles)], axis=1)
        weights = np.full(points, 2.0 * np.pi / points)
        return nodes, weights
    if n == 3:
        n_polar = max(2, int(np.sqrt(points)))
        n_azim = max(4, 2 * n_polar)
        z, wz = np.polynomial.legendre.leggauss(n_polar)
        phi = 2.0 * np.pi * np.arange(n_azim) / n_azim
        nodes, weights = [], []
        for zi, wi in zip(z, wz):
            r = np.sqrt(max(0.0, 1.0 - zi * zi))
            for p in phi:
                nodes.append([r * np.cos(p), r * np.sin(p), zi])
                weights.append(wi * 2.0 * np.pi / n_azim)
        return np.array(nodes), np.array(weights)
    raise ValueError(f"sphere quadrature not implemented for n={n}")


@dataclass(frozen=True)
class WeylConstantResult:
    quadrature: float
    closed_form: float = np.nan

    @property
    def residual(self):
        if np.isnan(self.closed_form):
            return np.nan
        return abs(self.quadrature - self.closed_form)


def weyl_constant(
    h,
    box,
    quadrature_points=64,
    h_inv=None,
    spectral_floor=DEFAULT_SPECTRAL_FLOOR,
):
    """Eigenvalue-counting constant of the metric by sphere quadrature.

    Integrates tau((xi, xi)_{h^{-1}}^{-n/2}) over the unit sphere and divides
    by n.  When h is a validated self-compatible metric the closed form
    (2 pi)^{-n} |unit ball| Vol is computed alongside.
    """
    if isinstance(h, RiemannianMetric):
        metric = h
        h_inv = h_inv or h.inverse
        h = h.matrix
    else:
        metric = None
        if h_inv is None:
            h_inv = calc.matrix_inverse(h, box, spectral_floor=spectral_floor)
    n = h.geometry.n
    nodes, weights = _sphere_nodes(n, quadrature_points)
    total = 0.0
    for xi, w in zip(nodes, weights):
        s = None
        for i in range(n):
            for j in range(n):
                t = scale(h_inv.entries[i][j], xi[i] * xi[j])
                s = t if s is None else add(s, t)
        s = scale(add(s, adjoint(s)), 0.5)
        val = functional_calculus(s, ("pow", -n / 2.0), box, spectral_floor=spectral_floor)
        total += w * float(trace(val).real)
    quad = total / n
    closed = np.nan
    if metric is not None and metric.is_self_compatible(tol=1e-10):
        closed = (2.0 * np.pi) ** (-n) * unit_ball_volume(n) * volume(metric, box=box)
    return WeylConstantResult(quad, closed)


@dataclass(frozen=True)
class WeylFitResult:
    exponent: float
    exponent_target: float
    prefactor_ratio: float
    counting_ratio_min: float
    counting_ratio_max: float
    counting_ratio_mean: float
    window: tuple


def weyl_fit(result, c_n, window):
    """Least-squares Weyl fit over a window of stable eigenvalue indices.

    Fits log(lambda_l) against log(l) (target slope 2/n), compares the
    fitted prefactor with (1/c_n)^{2/n}, and reports the counting-function
    ratio N(lambda)/(c_n lambda^{n/2}) over the window.
    """
    lo, hi = window
    lam = result.stable_eigenvalues
    n = result.geometry.n
    if lo < 1 or hi >= lam.size or lo >= hi:
        raise WindowOutOfRange(
            f"window {window} outside stable range (1, {lam.size - 1})"
        )
    ell = np.arange(lo, hi + 1, dtype=float)
    vals = lam[lo : hi + 1]
    slope, intercept = np.polyfit(np.log(ell), np.log(vals), 1)
    prefactor_ratio = float(np.exp(intercept) * c_n ** (2.0 / n))
    counting = np.searchsorted(lam, vals, side="right").astype(float)
    ratios = counting / (c_n * vals ** (n / 2.0))
    return WeylFitResult(
        float(slope),
        2.0 / n,
        prefactor_ratio,
        float(ratios.min()),
        float(ratios.max()),
        float(ratios.mean()),
        (lo, hi),
    )


def lattice_eigenvalues(box):
    """Sorted |k|^2 over the box: the exact flat spectrum with multiplicity."""
    return np.sort((box.modes() ** 2).sum(axis=1)).astype(float)

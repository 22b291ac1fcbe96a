"""Riemannian metrics, densities, weights, and volumes on the torus algebra.

A metric is a positive invertible n x n matrix over the algebra whose
entries, and those of its inverse, are selfadjoint.  Truncation breaks the
exact identities, so validation is tolerance-based and every validated
metric carries its measured residuals.

A density is a positive invertible element nu together with an internally
consistent family of powers (nu^{1/2}, nu^{-1/2}, nu^{-1}).  The family is
produced either from an exponential series nu = exp(w) or by Newton
polishing of spectral-calculus output; either way the pairwise consistency
residual (max coefficient of nu * nu^{-1} - 1 etc.) is recorded, since the
divergence/Laplacian identities inherit exactly this error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import calculus as calc
from .algebra import (
    AlgebraElement,
    LatticeBox,
    add,
    adjoint,
    commutator,
    exp_series,
    is_selfadjoint,
    multiply,
    resize,
    scale,
    selfadjoint_residual,
    trace,
)
from .calculus import (
    DEFAULT_SPECTRAL_FLOOR,
    TorusMatrix,
    compatibility_residual,
    determinant,
    functional_calculus,
    matrix_trace,
    self_compatibility_residual,
    spectral_bounds,
)
from .errors import (
    HypothesisViolated,
    MetricValidationError,
    PositivityViolation,
    SpectrumOutsideDomain,
)


# ---------------------------------------------------------------------------
# densities
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Density:
    """Positive invertible element with a consistent family of powers."""

    nu: AlgebraElement
    sqrt_nu: AlgebraElement
    inv_sqrt_nu: AlgebraElement
    inv_nu: AlgebraElement
    consistency_residual: float
    provenance: str = "explicit"

    @property
    def geometry(self):
        return self.nu.geometry


def density_one(geometry):
    one = AlgebraElement.identity(geometry)
    return Density(one, one, one, one, 0.0, provenance="unit")


def _family_residual(nu, sqrt_nu, inv_sqrt_nu, inv_nu):
    one = AlgebraElement.identity(nu.geometry)
    r1 = add(multiply(nu, inv_nu, "exact"), scale(one, -1.0)).max_abs()
    r2 = add(multiply(sqrt_nu, inv_sqrt_nu, "exact"), scale(one, -1.0)).max_abs()
    r3 = add(multiply(sqrt_nu, sqrt_nu, "exact"), scale(nu, -1.0)).max_abs()
    r4 = add(multiply(inv_sqrt_nu, inv_sqrt_nu, "exact"), scale(inv_nu, -1.0)).max_abs()
    return max(r1, r2, r3, r4)


def density_exp(w, radius=None):
    """Density nu = exp(w) for selfadjoint w, with all powers from the series."""
    if not is_selfadjoint(w, tol=1e-12):
        raise PositivityViolation("exponent must be selfadjoint")
    nu = exp_series(w, radius=radius)
    sq = exp_series(scale(w, 0.5), radius=radius)
    isq = exp_series(scale(w, -0.5), radius=radius)
    inv = exp_series(scale(w, -1.0), radius=radius)
    return Density(
        nu, sq, isq, inv, _family_residual(nu, sq, isq, inv), provenance="exp"
    )


def density_from_element(
    nu,
    box,
    spectral_floor=DEFAULT_SPECTRAL_FLOOR,
    refine_radius=None,
    refine_tol=1e-13,
    provenance="explicit",
):
    """Density from an explicit positive invertible element.

    Validates selfadjointness and the compressed spectral floor, takes the
    inverse square root by spectral calculus, and Newton-polishes it so the
    power family is mutually consistent to near refine_tol (limited by the
    coefficient decay of nu^{-1/2} at the refinement radius).
    """
    resid = selfadjoint_residual(nu)
    if resid > 1e-10 * (1.0 + nu.max_abs()):
        raise PositivityViolation(f"density not selfadjoint (residual {resid:.3e})")
    lo, hi = spectral_bounds(nu, box)
    if lo < spectral_floor:
        raise PositivityViolation(
            f"density spectral bound {lo:.3e} below floor {spectral_floor:.1e}"
        )
    if refine_radius is None:
        refine_radius = 2 * box.radius
    guess = functional_calculus(nu, "inv_sqrt", box, spectral_floor=spectral_floor)
    z, _ = calc.refine_inverse_sqrt(nu, guess, refine_radius, tol=refine_tol)
    from .algebra import trim

    cut = 1e-17 * max(1.0, nu.max_abs())
    z = trim(z, cut)
    sqrt_nu = trim(multiply(nu, z, "exact"), cut)
    inv_nu = trim(multiply(z, z, "exact"), cut)
    res = _family_residual(nu, sqrt_nu, z, inv_nu)
    return Density(nu, sqrt_nu, z, inv_nu, res, provenance=provenance)


def as_density(nu, box=None, **kw):
    if isinstance(nu, Density):
        return nu
    if box is None:
        raise ValueError("box required to build a density from a raw element")
    return density_from_element(nu, box, **kw)


# ---------------------------------------------------------------------------
# metric validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MetricValidationReport:
    selfadjoint_residual: float
    inverse_selfadjoint_residual: float
    inverse_residual: float
    spectral_min: float
    spectral_max: float
    self_compatibility: float


@dataclass(frozen=True)
class RiemannianMetric:
    """Validated metric: the matrix, its computed inverse, and residuals."""

    matrix: TorusMatrix
    inverse: TorusMatrix
    box: LatticeBox
    report: MetricValidationReport
    provenance: str = "explicit"

    @property
    def geometry(self):
        return self.matrix.geometry

    @property
    def n(self):
        return self.matrix.m

    def is_self_compatible(self, tol=1e-12):
        return self.report.self_compatibility <= tol * (1.0 + self.matrix.max_abs())


def _interior_identity_residual(g, g_inv):
    """Max coefficient of g g_inv - 1 on modes the truncation leaves exact."""
    prod = g.matmul(g_inv, mode="exact")
    margin = g_inv.max_radius() - g.max_radius()
    if margin < 0:
        margin = 0
    eye = TorusMatrix.identity(g.geometry, g.m)
    worst = 0.0
    for i in range(g.m):
        for j in range(g.m):
            d = add(prod.entries[i][j], scale(eye.entries[i][j], -1.0))
            worst = max(worst, resize(d, margin).max_abs())
    return worst


def validate_metric(
    g,
    box,
    selfadjoint_tol=1e-10,
    inverse_tol=1e-9,
    spectral_floor=DEFAULT_SPECTRAL_FLOOR,
    provenance="explicit",
    inverse=None,
):
    """Validate a candidate metric matrix and return a RiemannianMetric.

    Checks, in order: selfadjoint entries, positive invertibility of the
    compression, selfadjoint entries of the computed inverse, and the
    interior residual of g g^{-1} = 1.  Raises MetricValidationError with
    the measured report on failure.  The inverse selfadjointness test is
    what rejects positive matrices with selfadjoint entries whose inverse
    leaves the real subspace.  Size m < n is allowed (product-metric
    blocks); a full metric for the Laplacian must be n x n.
    """
    sa = max(
        selfadjoint_residual(g.entries[i][j]) for i in range(g.m) for j in range(g.m)
    )
    amp = 1.0 + g.max_abs()
    lo, hi = spectral_bounds(g, box) if sa <= selfadjoint_tol * amp else (np.nan, np.nan)

    def _report(inv_sa=np.nan, inv_res=np.nan, self_comp=np.nan):
        return MetricValidationReport(sa, inv_sa, inv_res, lo, hi, self_comp)

    if sa > selfadjoint_tol * amp:
        raise MetricValidationError(
            f"metric entries not selfadjoint (residual {sa:.3e})", _report()
        )
    if lo < spectral_floor:
        raise MetricValidationError(
            f"metric not positive invertible (compressed min {lo:.3e})", _report()
        )
    if inverse is None:
        inverse = calc.matrix_inverse(g, box, spectral_floor=spectral_floor)
    inv_sa = max(
        selfadjoint_residual(inverse.entries[i][j])
        for i in range(g.m)
        for j in range(g.m)
    )
    inv_amp = 1.0 + inverse.max_abs()
    if inv_sa > selfadjoint_tol * inv_amp:
        raise MetricValidationError(
            f"inverse entries not selfadjoint (residual {inv_sa:.3e})",
            _report(inv_sa=inv_sa),
        )
    inv_res = _interior_identity_residual(g, inverse)
    if inv_res > inverse_tol:
        raise MetricValidationError(
            f"g g^-1 = 1 fails on interior modes (residual {inv_res:.3e})",
            _report(inv_sa=inv_sa, inv_res=inv_res),
        )
    self_comp = self_compatibility_residual(g)
    return RiemannianMetric(
        g, inverse, box, _report(inv_sa, inv_res, self_comp), provenance=provenance
    )


# ---------------------------------------------------------------------------
# metric constructors
# ---------------------------------------------------------------------------


def metric_flat(geometry):
    """Euclidean metric g_ij = delta_ij; its inverse and density are exact."""
    n = geometry.n
    eye = TorusMatrix.identity(geometry, n)
    report = MetricValidationReport(0.0, 0.0, 0.0, 1.0, 1.0, 0.0)
    return RiemannianMetric(eye, eye, LatticeBox(n, 0), report, provenance="flat")


def metric_constant(geometry, mat, box=None):
    """Constant-coefficient metric from a real SPD numeric matrix."""
    mat = np.asarray(mat, dtype=float)
    if not np.allclose(mat, mat.T):
        raise MetricValidationError("constant metric must be symmetric")
    g = TorusMatrix.from_scalar_matrix(geometry, mat)
    inv = TorusMatrix.from_scalar_matrix(geometry, np.linalg.inv(mat))
    box = box or LatticeBox(geometry.n, 2)
    return validate_metric(g, box, provenance="constant", inverse=inv)


def metric_conformal(base, k, box, spectral_floor=DEFAULT_SPECTRAL_FLOOR):
    """Conformal deformation: entries k g_ij k for positive invertible k."""
    if not is_selfadjoint(k, tol=1e-10):
        raise PositivityViolation("conformal factor must be selfadjoint")
    lo, _ = spectral_bounds(k, box)
    if lo < spectral_floor:
        raise PositivityViolation(f"conformal factor compressed min {lo:.3e}")
    g = base.matrix if isinstance(base, RiemannianMetric) else base
    entries = [
        [multiply(multiply(k, g.entries[i][j], "exact"), k, "exact") for j in range(g.m)]
        for i in range(g.m)
    ]
    return validate_metric(
        TorusMatrix(g.geometry, g.m, entries), box, provenance="conformal"
    )


def metric_product(blocks, box):
    """Block-diagonal assembly of validated metrics; compatibility is measured."""
    mats = [b.matrix if isinstance(b, RiemannianMetric) else b for b in blocks]
    compat = 0.0
    for i in range(len(mats)):
        for j in range(i + 1, len(mats)):
            compat = max(compat, compatibility_residual(mats[i], mats[j]))
    g = TorusMatrix.block_diag(mats)
    metric = validate_metric(g, box, provenance=f"product(compat={compat:.3e})")
    return metric, compat


def metric_functional(h, profile, box, spectral_floor=DEFAULT_SPECTRAL_FLOOR):
    """Functional metric g_ij = g_ij(h) for a selfadjoint generator h.

    profile maps a real t to an n x n SPD matrix; it is sampled at the
    compressed eigenvalues of h, so all entries are functions of the single
    element h and the metric is self-compatible by construction.
    """
    geometry = h.geometry
    n = geometry.n
    op, lam, vecs = calc._eigendecomposition(h, box)
    samples = []
    for t in lam:
        try:
            mat = np.asarray(profile(float(t)), dtype=float)
        except Exception as exc:  # profile not defined at a sampled point
            raise SpectrumOutsideDomain(f"profile failed at t={t:.6g}: {exc}") from exc
        if mat.shape != (n, n) or not np.allclose(mat, mat.T):
            raise SpectrumOutsideDomain(f"profile at t={t:.6g} is not symmetric {n}x{n}")
        if np.linalg.eigvalsh(mat).min() <= 0:
            raise SpectrumOutsideDomain(f"profile not positive-definite at t={t:.6g}")
        samples.append(mat)
    samples = np.array(samples)  # (dim, n, n)
    i0 = box.index_of(np.zeros(n, dtype=int))
    w0 = vecs[i0].conj()
    entries = []
    for i in range(n):
        row = []
        for j in range(n):
            col = vecs @ (samples[:, i, j].astype(complex) * w0)
            row.append(calc.element_from_vector(geometry, box, col))
        entries.append(row)
    return validate_metric(
        TorusMatrix(geometry, n, entries),
        box,
        spectral_floor=spectral_floor,
        provenance="functional",
    )


# ---------------------------------------------------------------------------
# densities, weights, volumes of metrics
# ---------------------------------------------------------------------------


def riemannian_density(g, box=None, spectral_floor=DEFAULT_SPECTRAL_FLOOR, refine_tol=1e-13):
    """Volume element of a metric: sqrt(det g) = exp(Tr(log g) / 2)."""
    if isinstance(g, RiemannianMetric):
        box = box or g.box
        if g.provenance == "flat":
            return density_one(g.geometry)
        mat = g.matrix
    else:
        mat = g
        if box is None:
            raise ValueError("box required")
    log_g = functional_calculus(mat, "log", box, spectral_floor=spectral_floor)
    half_trace = scale(matrix_trace(log_g), 0.5)
    nu = functional_calculus(half_trace, "exp", box)
    nu = scale(add(nu, adjoint(nu)), 0.5)  # clear roundoff off the real subspace
    return density_from_element(
        nu,
        box,
        spectral_floor=spectral_floor,
        refine_tol=refine_tol,
        provenance="riemannian",
    )


def weight(nu, u):
    """Weight of a density: (2 pi)^n tau(u nu)."""
    nu_elem = nu.nu if isinstance(nu, Density) else nu
    n = nu_elem.geometry.n
    return (2.0 * np.pi) ** n * trace(multiply(u, nu_elem, "exact"))


def volume(g_or_density, box=None):
    """Riemannian volume (2 pi)^n tau(nu); a positive real."""
    if isinstance(g_or_density, RiemannianMetric):
        dens = riemannian_density(g_or_density, box=box)
    else:
        dens = g_or_density
    n = dens.geometry.n
    return float(((2.0 * np.pi) ** n * trace(dens.nu)).real)


def weight_trace_sandwich(density, x, box):
    """Bounds |nu^-1|^-1 tau(x) <= (2pi)^-n phi_nu(x) <= |nu| tau(x).

    Norms are compressed-operator norms, hence lower bounds of the true
    ones: the lower inequality is rigorous, the upper is empirical.
    """
    lo_inv, hi_inv = spectral_bounds(density.inv_nu, box)
    lo_nu, hi_nu = spectral_bounds(density.nu, box)
    t = float(trace(x).real)
    mid = float(((2.0 * np.pi) ** (-x.geometry.n) * weight(density, x)).real)
    return {
        "lower": t / max(hi_inv, np.finfo(float).tiny),
        "middle": mid,
        "upper": hi_nu * t,
    }


def orthogonal_invariance_check(g, u, box, compat_tol=1e-9, ortho_tol=1e-9):
    """Residuals of nu(u^t g u) = nu(g) and the matching volume identity.

    u must have selfadjoint entries, be self-compatible and compatible with
    g, and be orthogonal (u^t u = 1) to tolerance; otherwise the identity
    has no reason to hold and HypothesisViolated is raised.
    """
    mat = g.matrix if isinstance(g, RiemannianMetric) else g
    hyp = {
        "u_selfadjoint_entries": max(
            selfadjoint_residual(e) for row in u.entries for e in row
        ),
        "self_compatible(u)": self_compatibility_residual(u),
        "compatible(u,g)": compatibility_residual(u, mat),
    }
    ut = u.transpose()
    utu = ut.matmul(u, "exact")
    eye = TorusMatrix.identity(u.geometry, u.m)
    hyp["orthogonality"] = max(
        add(utu.entries[i][j], scale(eye.entries[i][j], -1.0)).max_abs()
        for i in range(u.m)
        for j in range(u.m)
    )
    bad = {k: v for k, v in hyp.items() if v > max(compat_tol, ortho_tol)}
    if bad:
        raise HypothesisViolated(f"orthogonal invariance hypotheses failed: {bad}", hyp)
    conj = ut.matmul(mat, "exact").matmul(u, "exact")
    nu_g = riemannian_density(mat, box=box)
    nu_c = riemannian_density(conj, box=box)
    r = max(nu_g.nu.box.radius, nu_c.nu.box.radius)
    dens_resid = add(resize(nu_c.nu, r), scale(resize(nu_g.nu, r), -1.0)).max_abs()
    vol_resid = abs(volume(nu_c) - volume(nu_g))
    return {"density_residual": dens_resid, "volume_residual": vol_resid, **hyp}


def conformal_density_residual(g, k, box):
    """Residual of nu(k^2 g) = k^n nu(g) for commuting k and g."""
    mat = g.matrix if isinstance(g, RiemannianMetric) else g
    n = mat.geometry.n
    comm = max(commutator(k, e, "exact").max_abs() for row in mat.entries for e in row)
    if comm > 1e-9 * (1.0 + k.max_abs() * mat.max_abs()):
        raise HypothesisViolated(f"[k, g] != 0 (residual {comm:.3e})", {"[k,g]": comm})
    k2 = multiply(k, k, "exact")
    scaled = TorusMatrix(
        mat.geometry,
        mat.m,
        [[multiply(k2, e, "exact") for e in row] for row in mat.entries],
    )
    nu_scaled = riemannian_density(scaled, box=box)
    nu_g = riemannian_density(mat, box=box)
    kn = AlgebraElement.identity(mat.geometry)
    for _ in range(n):
        kn = multiply(kn, k, "exact")
    expect = multiply(kn, nu_g.nu, "exact")
    r = max(nu_scaled.nu.box.radius, expect.box.radius)
    return add(resize(nu_scaled.nu, r), scale(resize(expect, r), -1.0)).max_abs()

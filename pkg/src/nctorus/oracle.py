"""Commutative grid reference for theta = 0.

At zero deformation the algebra is the trigonometric polynomials on the
ordinary torus, so every operation has an independent brute-force
counterpart: sample on a uniform grid, work pointwise, transform back.
Grids are oversampled fourfold relative to the largest occurring mode so
that quadratic expressions stay alias-free.  These functions refuse
noncommutative inputs; they exist to cross-validate the main path, not to
approximate it.
"""

from __future__ import annotations

import numpy as np

from .algebra import AlgebraElement, LatticeBox
from .calculus import _resolve_function
from .errors import AliasingRisk, NonzeroTheta, SpectralFloorViolation

DEFAULT_SPECTRAL_FLOOR = 1e-8


def _require_commutative(geometry):
    if not geometry.is_commutative:
        raise NonzeroTheta("grid oracle only applies to theta = 0")


def grid_for(*elements, factor=4):
    """Grid size with the stated oversampling for the given elements."""
    max_mode = max((e.support_radius() for e in elements), default=0)
    return factor * max(1, max_mode) + 1


def to_grid(u, grid_size=None):
    """Sample u(x) = sum u_k e^{i k.x} on the uniform grid of the torus."""
    _require_commutative(u.geometry)
    n = u.geometry.n
    if grid_size is None:
        grid_size = grid_for(u)
    if grid_size < 2 * u.support_radius() + 1:
        raise AliasingRisk(
            f"grid {grid_size} cannot carry modes up to {u.support_radius()}"
        )
    arr = np.zeros((grid_size,) * n, dtype=complex)
    r = u.box.radius
    for off in np.argwhere(u.table):
        k = off - r
        arr[tuple(k % grid_size)] += u.table[tuple(off)]
    return np.fft.ifftn(arr) * grid_size**n


def from_grid(geometry, samples, radius):
    """Recover the coefficient table of a trigonometric polynomial."""
    _require_commutative(geometry)
    samples = np.asarray(samples, dtype=complex)
    grid_size = samples.shape[0]
    if grid_size < 2 * radius + 1:
        raise AliasingRisk(f"grid {grid_size} cannot resolve radius {radius}")
    coeffs = np.fft.fftn(samples) / samples.size
    box = LatticeBox(geometry.n, radius)
    table = np.zeros(box.shape, dtype=complex)
    for k in box.modes():
        table[tuple(k + radius)] = coeffs[tuple(k % grid_size)]
    return AlgebraElement(geometry, box, table)


def oracle_multiply(u, v):
    """Pointwise product on an alias-free grid."""
    _require_commutative(u.geometry)
    radius = u.support_radius() + v.support_radius()
    grid = 4 * max(1, u.support_radius(), v.support_radius()) + 1
    grid = max(grid, 2 * radius + 1)
    return from_grid(u.geometry, to_grid(u, grid) * to_grid(v, grid), radius)


def oracle_adjoint(u):
    grid = grid_for(u)
    return from_grid(u.geometry, np.conj(to_grid(u, grid)), u.support_radius())


def _real_samples(x, grid):
    samples = to_grid(x, grid)
    worst = float(np.max(np.abs(samples.imag))) if samples.size else 0.0
    if worst > 1e-10 * (1.0 + np.max(np.abs(samples.real))):
        raise ValueError(f"samples not real (imag {worst:.3e}); input not selfadjoint?")
    return samples.real


def oracle_funcalc(x, fn, radius, grid_size=None, spectral_floor=DEFAULT_SPECTRAL_FLOOR):
    """Pointwise f of the (real) sample values of a selfadjoint element."""
    _, f, needs_floor = _resolve_function(fn)
    grid = grid_size or max(grid_for(x), 2 * radius + 1)
    vals = _real_samples(x, grid)
    if needs_floor and vals.min() < spectral_floor:
        raise SpectralFloorViolation(
            f"sampled values reach {vals.min():.3e} < floor {spectral_floor:.1e}"
        )
    return from_grid(x.geometry, np.asarray(f(vals), dtype=complex), radius)


def _matrix_samples(h, grid):
    m = h.m
    fields = np.empty((grid,) * h.geometry.n + (m, m), dtype=complex)
    for i in range(m):
        for j in range(m):
            fields[..., i, j] = to_grid(h.entries[i][j], grid)
    return fields


def oracle_matrix_funcalc(h, fn, radius, grid_size=None, spectral_floor=DEFAULT_SPECTRAL_FLOOR):
    """Pointwise matrix function of a selfadjoint matrix field (batched eigh)."""
    from .calculus import TorusMatrix

    _require_commutative(h.geometry)
    _, f, needs_floor = _resolve_function(fn)
    grid = grid_size or max(4 * max(1, h.max_radius()) + 1, 2 * radius + 1)
    fields = _matrix_samples(h, grid)
    fields = 0.5 * (fields + np.conj(np.swapaxes(fields, -1, -2)))
    lam, vecs = np.linalg.eigh(fields)
    if needs_floor and lam.min() < spectral_floor:
        raise SpectralFloorViolation(
            f"sampled spectrum reaches {lam.min():.3e} < floor {spectral_floor:.1e}"
        )
    fl = np.asarray(f(lam))
    out = np.einsum("...ik,...k,...jk->...ij", vecs, fl, np.conj(vecs))
    entries = [
        [from_grid(h.geometry, out[..., i, j], radius) for j in range(h.m)]
        for i in range(h.m)
    ]
    return TorusMatrix(h.geometry, h.m, entries)


def oracle_det(h, radius, grid_size=None):
    """Pointwise classical determinant of the sampled matrix field."""
    _require_commutative(h.geometry)
    grid = grid_size or max(
        4 * max(1, h.max_radius()) + 1, 2 * radius + 1, 2 * h.m * h.max_radius() + 1
    )
    fields = _matrix_samples(h, grid)
    return from_grid(h.geometry, np.linalg.det(fields), radius)


def oracle_density(h, radius, grid_size=None):
    """Pointwise sqrt(det) of a positive matrix field."""
    _require_commutative(h.geometry)
    grid = grid_size or max(4 * max(1, h.max_radius()) + 1, 2 * radius + 1)
    fields = _matrix_samples(h, grid)
    dets = np.linalg.det(fields).real
    if dets.min() <= 0:
        raise SpectralFloorViolation(f"sampled determinant reaches {dets.min():.3e}")
    return from_grid(h.geometry, np.sqrt(dets).astype(complex), radius)


def _grid_derivative(samples, axis):
    grid = samples.shape[0]
    freq = np.fft.fftfreq(grid, d=1.0 / grid)  # signed integer modes
    shape = [1] * samples.ndim
    shape[axis] = grid
    return np.fft.ifftn(np.fft.fftn(samples) * (1j * freq.reshape(shape)))


def oracle_laplacian_apply(prefactor, multipliers, u, grid_size=None):
    """-p sum_ij d_i(a_ij d_j u) by Fourier multipliers and pointwise products.

    Takes the same multiplier elements as the assembled operator, so the
    comparison isolates the composition machinery (twisted convolution and
    compression) against plain grid arithmetic.
    """
    _require_commutative(u.geometry)
    n = u.geometry.n
    sup_a = max(a.support_radius() for row in multipliers for a in row)
    radius = u.support_radius() + sup_a + prefactor.support_radius()
    grid = grid_size or max(2 * radius + 1, 4 * max(1, u.support_radius()) + 1)
    u_s = to_grid(u, grid)
    p_s = to_grid(prefactor, grid)
    acc = np.zeros_like(u_s)
    for i in range(n):
        for j in range(n):
            a_s = to_grid(multipliers[i][j], grid)
            acc += _grid_derivative(a_s * _grid_derivative(u_s, j), i)
    return from_grid(u.geometry, -p_s * acc, radius)


def oracle_laplacian_matrix(prefactor, multipliers, box, grid_size=None):
    """Column-by-column grid assembly of the operator on the box.

    Multiplier fields are sampled once; per basis mode the inner derivative
    is a scalar (a pure mode differentiates to itself), so each column costs
    n forward transforms and one inverse.
    """
    geometry = prefactor.geometry
    _require_commutative(geometry)
    n = geometry.n
    sup_a = max(a.support_radius() for row in multipliers for a in row)
    radius_needed = box.radius + sup_a + prefactor.support_radius()
    grid = grid_size or max(2 * radius_needed + 1, 4 * max(1, box.radius) + 1)
    p_s = to_grid(prefactor, grid)
    a_s = [[to_grid(multipliers[i][j], grid) for j in range(n)] for i in range(n)]
    freq = np.fft.fftfreq(grid, d=1.0 / grid)
    cols = np.zeros((box.size, box.size), dtype=complex)
    modes = box.modes()
    for idx in range(box.size):
        k = modes[idx]
        basis = AlgebraElement.basis(geometry, k, radius=box.radius)
        u_s = to_grid(basis, grid)
        acc_hat = np.zeros_like(u_s)
        for i in range(n):
            w = np.zeros_like(u_s)
            for j in range(n):
                if k[j]:
                    w += (1j * k[j]) * a_s[i][j]
            shape = [1] * n
            shape[i] = grid
            acc_hat += np.fft.fftn(w * u_s) * (1j * freq.reshape(shape))
        out = from_grid(geometry, -p_s * np.fft.ifftn(acc_hat), box.radius)
        cols[:, idx] = out.vector()
    return cols

import numpy as np
import pytest

from nctorus import algebra as alg, calculus as calc, laplacian as lap, metrics as met
from nctorus.algebra import AlgebraElement, LatticeBox
from nctorus.calculus import TorusMatrix
from nctorus.errors import BoxTooSmall, UnstableSpectrum, WindowOutOfRange
from nctorus.sampling import random_density, random_element, random_hermitian_matrix

from conftest import coeff_diff, trig_pair


def _ct_metric(geom, calc_radius=10, a0=0.15, a1=0.1):
    dk = met.density_exp(trig_pair(geom, 0, a0) + trig_pair(geom, 1, a1))
    ct = met.metric_conformal(
        met.metric_flat(geom), dk.nu, LatticeBox(2, calc_radius)
    )
    return dk, ct


def test_flat_operator_diagonal(geom, geom0):
    for g in (geom0, geom):
        box = LatticeBox(2, 4)
        op = lap.assemble_riemannian(met.metric_flat(g), box)
        off = op.matrix - np.diag(np.diag(op.matrix))
        assert np.max(np.abs(off)) == 0.0
        assert op.asymmetry == 0.0
        diag = np.sort(np.real(np.diag(op.matrix)))
        assert np.array_equal(diag, lap.lattice_eigenvalues(box))


def test_flat_multiplicities(geom):
    box = LatticeBox(2, 4)
    op = lap.assemble_riemannian(met.metric_flat(geom), box)
    res = lap.spectrum(op)
    assert res.multiplicity_of(0.0) == 1
    assert res.multiplicity_of(1.0) == 4
    assert res.multiplicity_of(2.0) == 4
    assert res.multiplicity_of(25.0) == 8  # (0, +-5) modes exceed the box


def test_flat_assemble_raw_path(geom):
    """assemble() with an identity matrix and unit density stays diagonal."""
    box = LatticeBox(2, 6)
    op = lap.assemble(TorusMatrix.identity(geom, 2), met.density_one(geom), box)
    off = op.matrix - np.diag(np.diag(op.matrix))
    assert np.max(np.abs(off)) < 1e-12
    assert np.max(np.abs(np.sort(np.real(np.diag(op.matrix))) -
                         lap.lattice_eigenvalues(box))) < 1e-12


def test_constants_killed_exactly(geom, rng):
    dk, ct = _ct_metric(geom)
    op = lap.assemble_riemannian(ct, LatticeBox(2, 8), calc_box=LatticeBox(2, 10))
    delta0 = np.zeros(op.box.size)
    delta0[op.box.index_of((0, 0))] = 1.0
    assert np.max(np.abs(op.matrix @ delta0)) == 0.0


def test_box_too_small(geom):
    dk, ct = _ct_metric(geom)
    with pytest.raises(BoxTooSmall):
        lap.assemble_riemannian(ct, LatticeBox(2, 10), mult_radius=3)


def test_conformal_operator_interior_identity(geom):
    """2-d conformal covariance at the operator level, flat base."""
    dk, ct = _ct_metric(geom)
    rep = lap.conformal_covariance_check(
        met.metric_flat(geom), dk.nu, LatticeBox(2, 10), calc_box=LatticeBox(2, 10)
    )
    assert rep["two_dim_residual"] < 1e-8


def test_conformal_identity_factor(geom):
    rep = lap.conformal_covariance_check(
        met.metric_flat(geom),
        AlgebraElement.identity(geom),
        LatticeBox(2, 6),
        calc_box=LatticeBox(2, 6),
    )
    assert rep["two_dim_residual"] < 1e-12


def test_conformal_constant_base(geom):
    w = trig_pair(geom, 0, 0.1) + trig_pair(geom, 1, 0.07)
    dk = met.density_exp(w)
    base = met.metric_constant(geom, [[1.4, 0.3], [0.3, 0.9]], box=LatticeBox(2, 4))
    rep = lap.conformal_covariance_check(
        base, dk.nu, LatticeBox(2, 10), calc_box=LatticeBox(2, 10)
    )
    assert rep["two_dim_residual"] < 1e-8


def test_self_compatible_commuted_form(geom):
    dk, ct = _ct_metric(geom)
    op = lap.assemble_riemannian(ct, LatticeBox(2, 10), calc_box=LatticeBox(2, 10))
    assert op.self_compatible_residual < 1e-9


def test_green_identity(geom, rng):
    dk, ct = _ct_metric(geom)
    op = lap.assemble_riemannian(ct, LatticeBox(2, 10), calc_box=LatticeBox(2, 10))
    for _ in range(5):
        u = random_element(geom, 3, rng)
        v = random_element(geom, 3, rng)
        assert lap.green_identity_residual(op, u, v) < 1e-9


def test_matrix_application_matches_exact_path(geom, rng):
    dk, ct = _ct_metric(geom)
    op = lap.assemble_riemannian(ct, LatticeBox(2, 10), calc_box=LatticeBox(2, 10))
    u = random_element(geom, 3, rng)
    via_matrix = op.apply(u)
    via_elements = op.apply_exact(u)
    assert coeff_diff(alg.resize(via_matrix, 5), alg.resize(via_elements, 5)) < 1e-11


def test_asymmetry_decreases_with_box(geom):
    dk, ct = _ct_metric(geom)
    dens = met.riemannian_density(ct)
    values = []
    for radius in (6, 8, 10, 12):
        op = lap.assemble_riemannian(
            ct, LatticeBox(2, radius), calc_box=LatticeBox(2, 10), density=dens
        )
        values.append(op.asymmetry)
    assert all(a > b for a, b in zip(values, values[1:]))


def test_kernel_and_nonnegativity(geom, rng):
    for _ in range(3):
        h, _ = random_hermitian_matrix(geom, 2, 1, rng, amplitude=0.2)
        dens = random_density(geom, rng, amplitude=0.15)
        op = lap.assemble(h, dens, LatticeBox(2, 10))
        res = lap.spectrum(op)
        stable = res.stable_eigenvalues
        assert abs(stable[0]) <= 1e-8
        assert np.sum(np.abs(stable) <= 1e-8) == 1
        assert stable.min() >= -1e-8


def test_spectrum_stability_flags_flat(geom):
    box = LatticeBox(2, 6)
    op = lap.assemble_riemannian(met.metric_flat(geom), box)
    res = lap.spectrum(op)
    lam = res.stable_eigenvalues
    assert np.array_equal(lam, lap.lattice_eigenvalues(box)[: lam.size])
    assert lam.max() < (box.radius + 1) ** 2 + 1e-9
    with pytest.raises(UnstableSpectrum):
        lap.spectrum(op, count=box.size)


def test_eigenbasis_orthonormality_and_shell_decay(geom):
    dk, ct = _ct_metric(geom)
    op = lap.assemble_riemannian(ct, LatticeBox(2, 10), calc_box=LatticeBox(2, 10))
    res = lap.spectrum(op)
    stable_idx = np.where(res.stable)[0]
    decays = [lap.eigenvector_shell_decay(res, i) for i in stable_idx[:20]]
    assert max(decays) <= 1e-6
    reliable = lap.reliable_indices(res, shell_tol=1e-6)
    assert len(reliable) >= 20
    assert lap.eigenbasis_gram_residual(op, res, indices=reliable) < 1e-8


def test_generalized_eigensolve_agrees(geom):
    dk, ct = _ct_metric(geom)
    op = lap.assemble_riemannian(ct, LatticeBox(2, 10), calc_box=LatticeBox(2, 10))
    res = lap.spectrum(op)
    lam_gen = lap.generalized_spectrum(op)
    reliable = lap.reliable_indices(res, shell_tol=1e-6)
    diffs = np.abs(res.eigenvalues[reliable] - lam_gen[reliable]) / (
        1.0 + np.abs(lam_gen[reliable])
    )
    assert diffs.max() < 1e-6


def test_deformed_flat_spectrum_match(geom):
    dk, ct = _ct_metric(geom)
    box = LatticeBox(2, 10)
    op = lap.assemble_riemannian(ct, box, calc_box=LatticeBox(2, 10))
    res = lap.spectrum(op)
    a = lap.conformally_deformed_flat_matrix(dk.nu, box, calc_box=LatticeBox(2, 10))
    assert np.max(np.abs(a - a.conj().T)) < 1e-12
    lam = np.linalg.eigvalsh(a)
    stable = res.stable_eigenvalues
    rel = np.abs(stable - lam[: stable.size]) / (1.0 + np.abs(stable))
    assert rel.max() < 1e-3


def test_principal_symbol_invertible(geom):
    dk, ct = _ct_metric(geom)
    op = lap.assemble_riemannian(ct, LatticeBox(2, 8), calc_box=LatticeBox(2, 10))
    lo, hi = lap.principal_symbol_bounds(op, samples=12)
    assert lo > 0.1 and hi < 10.0


def test_product_metric_expanded_operator(geom, rng):
    """Two-factor diagonal metric reproduces the expanded coefficient form."""
    w = trig_pair(geom, 0, 0.12)
    k1, k2 = alg.exp_series(w), alg.exp_series(alg.scale(w, 0.7))
    zero = AlgebraElement.zeros(geom, 0)
    gmat = TorusMatrix(
        geom,
        2,
        [[alg.multiply(k1, k1, "exact"), zero], [zero, alg.multiply(k2, k2, "exact")]],
    )
    g = met.validate_metric(gmat, LatticeBox(2, 10))
    op = lap.assemble_riemannian(g, LatticeBox(2, 10), calc_box=LatticeBox(2, 10))
    u = random_element(geom, 3, rng)
    lhs = alg.scale(op.apply(u), -1.0)
    k1i, k2i = alg.exp_series(alg.scale(w, -1.0)), alg.exp_series(alg.scale(w, -0.7))
    term = lambda ki, axis: alg.multiply(
        alg.multiply(ki, ki, "exact"),
        alg.derivation(alg.derivation(u, axis), axis),
        "exact",
    )
    inv12 = alg.multiply(k1i, k2i, "exact")
    grad1 = alg.multiply(
        alg.multiply(inv12, alg.derivation(alg.multiply(k2, k1i, "exact"), 0), "exact"),
        alg.derivation(u, 0),
        "exact",
    )
    grad2 = alg.multiply(
        alg.multiply(inv12, alg.derivation(alg.multiply(k1, k2i, "exact"), 1), "exact"),
        alg.derivation(u, 1),
        "exact",
    )
    rhs = alg.add(alg.add(term(k1i, 0), term(k2i, 1)), alg.add(grad1, grad2))
    assert coeff_diff(alg.resize(lhs, 5), alg.resize(rhs, 5)) < 1e-7


def test_weyl_constant_flat(geom):
    wc = lap.weyl_constant(met.metric_flat(geom), LatticeBox(2, 6), quadrature_points=32)
    assert wc.quadrature == pytest.approx(np.pi, abs=1e-12)
    assert wc.closed_form == pytest.approx(np.pi, abs=1e-12)


def test_weyl_constant_scaling(geom):
    """Homogeneity: scaling the metric by t scales the constant by t^{n/2}."""
    t = 4.0
    scaled = met.metric_constant(geom, t * np.eye(2))
    wc = lap.weyl_constant(scaled, LatticeBox(2, 6), quadrature_points=32)
    assert wc.quadrature == pytest.approx(t * np.pi, rel=1e-12)
    assert wc.closed_form == pytest.approx(t * np.pi, rel=1e-12)


def test_weyl_constant_conformal(geom):
    dk, ct = _ct_metric(geom)
    wc = lap.weyl_constant(ct, LatticeBox(2, 8), quadrature_points=48)
    assert wc.residual < 1e-6
    expect = np.pi * alg.trace(alg.multiply(dk.nu, dk.nu, "exact")).real
    assert wc.closed_form == pytest.approx(expect, rel=1e-10)


def test_weyl_fit_flat(geom):
    box = LatticeBox(2, 12)
    op = lap.assemble_riemannian(met.metric_flat(geom), box)
    res = lap.spectrum(op)
    assert res.stable_count() > 400
    fit = lap.weyl_fit(res, np.pi, (50, 300))
    assert abs(fit.exponent - 1.0) < 0.05
    assert 0.85 < fit.counting_ratio_min and fit.counting_ratio_max < 1.15
    with pytest.raises(WindowOutOfRange):
        lap.weyl_fit(res, np.pi, (50, 10_000))


def test_interior_indices(geom):
    box = LatticeBox(2, 4)
    idx = lap.interior_indices(box, 2)
    assert len(idx) == 25
    modes = box.modes()[idx]
    assert np.max(np.abs(modes)) <= 2

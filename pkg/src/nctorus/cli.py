"""Command-line front end: config-driven verification pipelines.

Every subcommand reads a JSON config (geometry, box radius, multiplier
radius, metric spec, optional density override, tolerances), prints a
summary, optionally writes CSV/JSON output, and exits 0 exactly when all
residual gates configured for it pass.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import io as nio
from . import laplacian as lap
from . import metrics as met
from . import oracle as orc
from .algebra import (
    AlgebraElement,
    add,
    adjoint,
    multiply,
    resize,
    scale,
)
from .calculus import (
    TorusMatrix,
    determinant,
    functional_calculus,
    leibniz_determinant,
    matrix_inverse,
)
from .errors import NCTorusError
from .forms import adjointness_residual
from .sampling import (
    random_density,
    random_element,
    random_hermitian_matrix,
    random_one_form,
)


def _difference(a, b):
    r = max(a.box.radius, b.box.radius)
    return add(resize(a, r), scale(resize(b, r), -1.0)).max_abs()


def _emit(report, out_path):
    text = json.dumps(report, indent=2, default=float)
    if out_path:
        with open(out_path, "w", encoding="utf8") as f:
            f.write(text + "\n")
    print(text)


def _gate_lines(gates):
    ok = True
    for name, (value, bound) in gates.items():
        passed = bool(value <= bound)
        ok = ok and passed
        print(f"  [{'PASS' if passed else 'FAIL'}] {name}: {value:.3e} (<= {bound:.1e})")
    return ok


def _assembled(cfg):
    metric = cfg.build_metric()
    nu = cfg.build_density()
    kwargs = dict(
        box=cfg.box,
        mult_radius=cfg.multiplier_radius,
        calc_box=cfg.calc_box,
        spectral_floor=cfg.tolerances.spectral_floor,
    )
    if nu is None:
        return metric, lap.assemble_riemannian(metric, **kwargs)
    return metric, lap.assemble(metric, nu, **kwargs)


def cmd_spectrum(cfg, args):
    metric, op = _assembled(cfg)
    count = args.count or cfg.count
    result = lap.spectrum(
        op,
        count=count,
        stability_radius=cfg.stability_radius,
        rel_tol=cfg.tolerances.stability_rel,
        multiplicity_tol=cfg.tolerances.multiplicity,
        asymmetry_threshold=cfg.tolerances.asymmetry_threshold,
    )
    if args.out:
        nio.write_spectrum_csv(args.out, result)
        print(f"wrote {args.out}")
    stable = result.stable_eigenvalues
    print(
        f"spectrum: {result.stable_count()} stable of {result.eigenvalues.size} "
        f"(asymmetry {op.asymmetry:.3e})"
    )
    gates = {
        "asymmetry": (op.asymmetry, cfg.tolerances.asymmetry_threshold),
        "kernel |lambda_0|": (abs(float(stable[0])), cfg.tolerances.kernel),
        "negativity": (max(0.0, -float(stable.min())), cfg.tolerances.kernel),
        "requested count deficit": (float(max(0, count - result.stable_count())), 0.5),
    }
    return _gate_lines(gates)


def cmd_weyl(cfg, args):
    metric, op = _assembled(cfg)
    result = lap.spectrum(
        op,
        stability_radius=cfg.stability_radius,
        rel_tol=cfg.tolerances.stability_rel,
        asymmetry_threshold=cfg.tolerances.asymmetry_threshold,
    )
    n = cfg.geometry.n
    window = nio.parse_window(args.window) if args.window else cfg.window
    if window is None:
        hi = result.stable_count() - 1
        window = (max(1, hi // 6), hi)
    wc = lap.weyl_constant(
        metric,
        cfg.calc_box,
        quadrature_points=cfg.quadrature_points,
        spectral_floor=cfg.tolerances.spectral_floor,
    )
    c_n = wc.closed_form if not np.isnan(wc.closed_form) else wc.quadrature
    fit = lap.weyl_fit(result, c_n, window)
    report = {
        "c_n_quadrature": wc.quadrature,
        "c_n_closed_form": wc.closed_form,
        "c_n_residual": wc.residual,
        "exponent": fit.exponent,
        "exponent_target": fit.exponent_target,
        "prefactor_ratio": fit.prefactor_ratio,
        "counting_ratio": [fit.counting_ratio_min, fit.counting_ratio_mean, fit.counting_ratio_max],
        "window": list(fit.window),
        "stable_count": result.stable_count(),
    }
    _emit(report, args.out)
    gates = {
        "exponent deviation": (
            abs(fit.exponent - fit.exponent_target) / fit.exponent_target,
            cfg.tolerances.weyl_exponent_pct / 100.0,
        ),
        "counting ratio deviation": (
            max(abs(fit.counting_ratio_min - 1.0), abs(fit.counting_ratio_max - 1.0)),
            cfg.tolerances.weyl_ratio_pct / 100.0,
        ),
    }
    if not np.isnan(wc.closed_form):
        gates["quadrature vs closed form"] = (wc.residual, cfg.tolerances.weyl_constant)
    return _gate_lines(gates)


def cmd_conformal_check(cfg, args):
    spec = cfg.metric_spec
    if spec.get("type") != "conformal":
        raise NCTorusError("conformal-check requires a conformal metric spec")
    base = nio.metric_from_spec(
        cfg.geometry, spec.get("base", {"type": "flat"}), cfg.calc_box,
        spectral_floor=cfg.tolerances.spectral_floor,
    )
    k = nio.positive_element_from_spec(
        cfg.geometry, spec["k"], cfg.calc_box, cfg.tolerances.spectral_floor
    )
    report = lap.conformal_covariance_check(
        base, k, cfg.box, calc_box=cfg.calc_box,
        spectral_floor=cfg.tolerances.spectral_floor,
    )
    key = "two_dim_residual" if cfg.geometry.n == 2 else "full_law_residual"
    gates = {key: (report[key], cfg.tolerances.conformal)}
    if cfg.geometry.n == 2 and base.provenance == "flat":
        ct = met.metric_conformal(base, k, cfg.calc_box)
        op = lap.assemble_riemannian(ct, cfg.box, calc_box=cfg.calc_box)
        res = lap.spectrum(
            op,
            stability_radius=cfg.stability_radius,
            rel_tol=cfg.tolerances.stability_rel,
            asymmetry_threshold=cfg.tolerances.asymmetry_threshold,
        )
        a = lap.conformally_deformed_flat_matrix(k, cfg.box, calc_box=cfg.calc_box)
        lam = np.linalg.eigvalsh(a)
        stable = res.stable_eigenvalues
        rel = np.abs(stable - lam[: stable.size]) / (1.0 + np.abs(stable))
        report["deformed_flat_match"] = float(rel.max())
        gates["deformed flat spectrum match"] = (
            float(rel.max()),
            cfg.tolerances.stability_rel,
        )
    _emit(report, args.out)
    return _gate_lines(gates)


def cmd_det_check(cfg, args):
    metric = cfg.build_metric()
    box = cfg.calc_box
    g = metric.matrix
    m = g.m
    d = determinant(g, box, spectral_floor=cfg.tolerances.spectral_floor)
    report = {}
    t = 2.0
    report["scaling det(t g) = t^m det(g)"] = _difference(
        determinant(g.scale(t), box), scale(d, t**m)
    )
    gs = functional_calculus(g, ("pow", 0.5), box)
    report["power det(g^s) = det(g)^s"] = _difference(
        determinant(gs, box), functional_calculus(d, ("pow", 0.5), box)
    )
    k = cfg.build_density()
    k_elem = k.nu if k is not None else AlgebraElement.identity(cfg.geometry) * 2.0
    km = TorusMatrix(
        cfg.geometry, m, [[k_elem if i == j else AlgebraElement.zeros(cfg.geometry, 0) for j in range(m)] for i in range(m)]
    )
    kpow = AlgebraElement.identity(cfg.geometry)
    for _ in range(m):
        kpow = multiply(kpow, k_elem, "exact")
    report["scalar matrix det(k I_m) = k^m"] = _difference(determinant(km, box), kpow)
    if metric.is_self_compatible(tol=1e-10):
        report["self-compatible Leibniz expansion"] = _difference(
            d, leibniz_determinant(g)
        )
    _emit(report, args.out)
    gates = {name: (val, cfg.tolerances.determinant) for name, val in report.items()}
    return _gate_lines(gates)


def cmd_adjoint_check(cfg, args):
    rng = np.random.default_rng(cfg.seed)
    geometry = cfg.geometry
    box = cfg.calc_box
    interior = max(1, cfg.box_radius // 2)
    count = args.count or min(cfg.count, 50)
    worst = 0.0
    for _ in range(count):
        h, _ = random_hermitian_matrix(geometry, geometry.n, 1, rng, amplitude=0.2)
        h_inv = matrix_inverse(h, box, spectral_floor=cfg.tolerances.spectral_floor)
        dens = random_density(geometry, rng, radius=1, amplitude=0.15)
        omega = random_one_form(geometry, interior, rng)
        u = random_element(geometry, interior, rng)
        worst = max(worst, adjointness_residual(omega, u, h, dens, h_inv=h_inv))
    print(f"adjoint-check: {count} instances, worst residual {worst:.3e}")
    return _gate_lines({"adjointness": (worst, cfg.tolerances.adjointness)})


def cmd_volume(cfg, args):
    metric = cfg.build_metric()
    box = cfg.calc_box
    dens = met.riemannian_density(metric, box=box)
    vol = met.volume(dens)
    detg = determinant(metric.matrix, box, spectral_floor=cfg.tolerances.spectral_floor)
    sq = multiply(dens.nu, dens.nu, "exact")
    report = {
        "volume": vol,
        "flat_reference": (2.0 * np.pi) ** cfg.geometry.n,
        "density_consistency": dens.consistency_residual,
        "density_squared_vs_det": _difference(sq, detg),
    }
    _emit(report, args.out)
    gates = {
        "nu(g)^2 = det(g)": (report["density_squared_vs_det"], cfg.tolerances.volume),
        "positivity": (max(0.0, -vol), 0.0),
    }
    if metric.provenance == "flat":
        gates["flat volume"] = (
            abs(vol - report["flat_reference"]),
            1e-10 * report["flat_reference"],
        )
    return _gate_lines(gates)


def cmd_oracle_compare(cfg, args):
    geometry = cfg.geometry
    if not geometry.is_commutative:
        raise NCTorusError("oracle-compare requires theta = 0 in the config")
    rng = np.random.default_rng(cfg.seed)
    box = cfg.calc_box
    algebraic, spectral = {}, {}

    u = random_element(geometry, 3, rng)
    v = random_element(geometry, 2, rng)
    algebraic["multiply"] = _difference(
        multiply(u, v, "exact"), orc.oracle_multiply(u, v)
    )
    algebraic["adjoint"] = _difference(adjoint(u), orc.oracle_adjoint(u))
    from .algebra import derivation, inner_product, trace

    gu = orc.to_grid(u, orc.grid_for(u))
    gv = orc.to_grid(v, orc.grid_for(u))
    algebraic["trace"] = abs(trace(u) - complex(gu.mean()))
    algebraic["inner_product"] = abs(
        inner_product(u, v) - complex((gu * np.conj(gv)).mean())
    )
    du_grid = orc.from_grid(geometry, orc._grid_derivative(gu, 0), u.support_radius())
    algebraic["derivation"] = _difference(derivation(u, 0), du_grid)

    metric = cfg.build_metric()
    x = add(
        scale(AlgebraElement.identity(geometry), 2.0),
        random_density(geometry, rng, radius=1, amplitude=0.1).nu,
    )
    inner = max(2, box.radius // 3)
    for fn in ("sqrt", "log", "exp", "inv"):
        arg = scale(x, 0.5) if fn == "exp" else x  # keep exp growth resolvable
        a = functional_calculus(arg, fn, box, spectral_floor=cfg.tolerances.spectral_floor)
        b = orc.oracle_funcalc(arg, fn, radius=box.radius)
        spectral[f"funcalc_{fn}"] = _difference(resize(a, inner), resize(b, inner))
    d_main = determinant(metric.matrix, box)
    d_orc = orc.oracle_det(metric.matrix, radius=box.radius)
    spectral["determinant"] = _difference(
        resize(d_main, box.radius // 2), resize(d_orc, box.radius // 2)
    )
    dens = met.riemannian_density(metric, box=box)
    nu_orc = orc.oracle_density(metric.matrix, radius=box.radius)
    spectral["riemannian_density"] = _difference(
        resize(dens.nu, box.radius // 2), resize(nu_orc, box.radius // 2)
    )
    mult_radius = cfg.multiplier_radius or max(1, cfg.box_radius // 4)
    op = lap.assemble_riemannian(
        metric, cfg.box, mult_radius=mult_radius, calc_box=box
    )
    m_orc = orc.oracle_laplacian_matrix(op.prefactor, op.multipliers, cfg.box)
    rows = lap.interior_indices(cfg.box, cfg.box_radius - 2 * mult_radius)
    algebraic["laplacian_matrix_interior"] = float(
        np.max(np.abs((op.matrix - m_orc)[rows]))
    )

    report = {"algebraic": algebraic, "spectral": spectral}
    _emit(report, args.out)
    gates = {}
    for name, val in algebraic.items():
        gates[name] = (val, cfg.tolerances.oracle_algebraic)
    for name, val in spectral.items():
        gates[name] = (val, cfg.tolerances.oracle_spectral)
    return _gate_lines(gates)


_COMMANDS = {
    "spectrum": cmd_spectrum,
    "weyl": cmd_weyl,
    "conformal-check": cmd_conformal_check,
    "det-check": cmd_det_check,
    "adjoint-check": cmd_adjoint_check,
    "volume": cmd_volume,
    "oracle-compare": cmd_oracle_compare,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="nctorus",
        description="Spectral geometry on noncommutative tori at finite truncation",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", default=None, help="output file (CSV or JSON)")
        if name in ("spectrum", "adjoint-check"):
            p.add_argument("--count", type=int, default=None)
        if name == "weyl":
            p.add_argument("--window", default=None, help="index window lo:hi")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    cfg = nio.load_config(args.config)
    try:
        ok = _COMMANDS[args.command](cfg, args)
    except NCTorusError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())

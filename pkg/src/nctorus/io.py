"""File formats: JSON literals, run configuration, spectra CSV, operator cache.

Element literal: a list of {"k": [k1, ..., kn], "re": float, "im": float}
entries; geometry literal: {"n": int, "theta": [[...]]} or {"n": int,
"theta_upper": [...]} (strictly upper-triangular entries, row by row, which
guarantees exact antisymmetry through JSON round-trips).  Matrix literals
are m x m nested element literals; form literals are lists of n element
literals.

Positive elements in metric/density specs may be given three ways:
a bare literal (positivity checked by compressed spectral bounds),
{"exp_of": literal} for exp of a selfadjoint element, or
{"witness": literal, "constant": c} for w* w + c.

The operator cache is little-endian: magic "NCOP", u32 version, u32 n,
u32 m, u32 box radius, 20-byte SHA-1 of (n, theta), then the row-major
complex128 payload.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass, field, fields

import numpy as np

from .algebra import AlgebraElement, LatticeBox, TorusGeometry, add, adjoint, scale
from .calculus import (
    CompressedOperator,
    TorusMatrix,
    make_positive,
    spectral_bounds,
)
from .errors import NCTorusError, PositivityViolation
from .metrics import (
    Density,
    density_exp,
    density_from_element,
    metric_conformal,
    metric_constant,
    metric_flat,
    metric_functional,
    metric_product,
    validate_metric,
)

_MAGIC = b"NCOP"
_VERSION = 1
_HEADER = struct.Struct("<4sIIII20s")


# ---------------------------------------------------------------------------
# literals
# ---------------------------------------------------------------------------


def geometry_to_literal(geometry):
    return {"n": geometry.n, "theta": geometry.theta.tolist()}


def geometry_from_literal(lit):
    n = int(lit["n"])
    if "theta_upper" in lit:
        return TorusGeometry.from_upper(n, [float(v) for v in lit["theta_upper"]])
    return TorusGeometry(n, lit["theta"])


def element_to_literal(u, cutoff=0.0):
    out = []
    r = u.box.radius
    for off in np.argwhere(np.abs(u.table) > cutoff):
        k = off - r
        c = u.table[tuple(off)]
        out.append({"k": [int(x) for x in k], "re": float(c.real), "im": float(c.imag)})
    return out


def element_from_literal(geometry, literal, radius=None):
    modes = {}
    for item in literal:
        k = tuple(int(x) for x in item["k"])
        if len(k) != geometry.n:
            raise ValueError(f"mode {k} has wrong dimension")
        modes[k] = complex(float(item.get("re", 0.0)), float(item.get("im", 0.0)))
    if not modes:
        return AlgebraElement.zeros(geometry, radius or 0)
    return AlgebraElement.from_modes(geometry, modes, radius=radius)


def matrix_to_literal(h, cutoff=0.0):
    return [[element_to_literal(e, cutoff) for e in row] for row in h.entries]


def matrix_from_literal(geometry, literal):
    entries = [[element_from_literal(geometry, e) for e in row] for row in literal]
    return TorusMatrix(geometry, len(entries), entries)


def form_to_literal(omega, cutoff=0.0):
    return [element_to_literal(c, cutoff) for c in omega.components]


def form_from_literal(geometry, literal, kind):
    comps = [element_from_literal(geometry, c) for c in literal]
    return kind(geometry, tuple(comps))


def positive_element_from_spec(geometry, spec, box, spectral_floor=1e-8):
    """Positive invertible element from a config spec (see module docstring)."""
    if isinstance(spec, dict) and "exp_of" in spec:
        w = element_from_literal(geometry, spec["exp_of"])
        w = scale(add(w, adjoint(w)), 0.5)
        from .algebra import exp_series

        return exp_series(w)
    if isinstance(spec, dict) and "witness" in spec:
        y = element_from_literal(geometry, spec["witness"])
        x, _ = make_positive(y, float(spec.get("constant", 1.0)))
        return x
    x = element_from_literal(geometry, spec)
    lo, _ = spectral_bounds(scale(add(x, adjoint(x)), 0.5), box)
    if lo < spectral_floor:
        raise PositivityViolation(f"element spec has compressed min {lo:.3e}")
    return x


def density_from_spec(geometry, spec, box, spectral_floor=1e-8):
    if isinstance(spec, dict) and "exp_of" in spec:
        w = element_from_literal(geometry, spec["exp_of"])
        w = scale(add(w, adjoint(w)), 0.5)
        return density_exp(w)
    nu = positive_element_from_spec(geometry, spec, box, spectral_floor)
    return density_from_element(nu, box, spectral_floor=spectral_floor)


def metric_from_spec(geometry, spec, box, spectral_floor=1e-8):
    """Build and validate a metric from its JSON spec."""
    kind = spec.get("type", "flat")
    if kind == "flat":
        return metric_flat(geometry)
    if kind == "constant":
        return metric_constant(geometry, spec["matrix"], box=box)
    if kind == "conformal":
        base = metric_from_spec(geometry, spec.get("base", {"type": "flat"}), box, spectral_floor)
        k = positive_element_from_spec(geometry, spec["k"], box, spectral_floor)
        return metric_conformal(base, k, box, spectral_floor=spectral_floor)
    if kind == "product":
        blocks = [
            metric_from_spec(geometry, b, box, spectral_floor) for b in spec["blocks"]
        ]
        metric, _ = metric_product(blocks, box)
        return metric
    if kind == "functional":
        h = element_from_literal(geometry, spec["h"])
        h = scale(add(h, adjoint(h)), 0.5)
        poly = np.asarray(spec["poly"], dtype=float)  # (n, n, deg+1)

        def profile(t):
            powers = t ** np.arange(poly.shape[2])
            return np.einsum("ijd,d->ij", poly, powers)

        return metric_functional(h, profile, box, spectral_floor=spectral_floor)
    if kind == "explicit":
        return validate_metric(
            matrix_from_literal(geometry, spec["entries"]), box,
            spectral_floor=spectral_floor,
        )
    raise ValueError(f"unknown metric spec type {kind!r}")


# ---------------------------------------------------------------------------
# run configuration
# ---------------------------------------------------------------------------


@dataclass
class Tolerances:
    spectral_floor: float = 1e-8
    selfadjoint: float = 1e-10
    inverse: float = 1e-9
    stability_rel: float = 1e-3
    multiplicity: float = 1e-6
    asymmetry_threshold: float = 0.1
    kernel: float = 1e-8
    adjointness: float = 1e-10
    conformal: float = 1e-8
    determinant: float = 1e-8
    volume: float = 1e-8
    oracle_algebraic: float = 1e-12
    oracle_spectral: float = 1e-8
    weyl_exponent_pct: float = 5.0
    weyl_ratio_pct: float = 15.0
    weyl_constant: float = 1e-6

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown tolerance keys {sorted(unknown)}")
        return cls(**d)


@dataclass
class RunConfig:
    geometry: TorusGeometry
    box_radius: int
    multiplier_radius: object = None  # int or None
    calc_radius: object = None  # defaults to box_radius
    stability_radius: object = None  # defaults to box_radius + 2
    metric_spec: dict = field(default_factory=lambda: {"type": "flat"})
    nu_spec: object = None
    tolerances: Tolerances = field(default_factory=Tolerances)
    seed: int = 0
    count: int = 100
    quadrature_points: int = 64
    window: object = None  # (lo, hi) or None

    @property
    def box(self):
        return LatticeBox(self.geometry.n, self.box_radius)

    @property
    def calc_box(self):
        return LatticeBox(self.geometry.n, self.calc_radius or self.box_radius)

    def build_metric(self):
        return metric_from_spec(
            self.geometry, self.metric_spec, self.calc_box,
            spectral_floor=self.tolerances.spectral_floor,
        )

    def build_density(self):
        if self.nu_spec is None:
            return None
        return density_from_spec(
            self.geometry, self.nu_spec, self.calc_box,
            spectral_floor=self.tolerances.spectral_floor,
        )


def parse_window(text):
    lo, hi = text.split(":")
    return int(lo), int(hi)


def load_config(path):
    with open(path, encoding="utf8") as f:
        raw = json.load(f)
    geometry = geometry_from_literal(raw["geometry"])
    window = raw.get("window")
    if isinstance(window, str):
        window = parse_window(window)
    elif window is not None:
        window = (int(window[0]), int(window[1]))
    return RunConfig(
        geometry=geometry,
        box_radius=int(raw["box_radius"]),
        multiplier_radius=raw.get("multiplier_radius"),
        calc_radius=raw.get("calc_radius"),
        stability_radius=raw.get("stability_radius"),
        metric_spec=raw.get("metric", {"type": "flat"}),
        nu_spec=raw.get("nu"),
        tolerances=Tolerances.from_dict(raw.get("tolerances", {})),
        seed=int(raw.get("seed", 0)),
        count=int(raw.get("count", 100)),
        quadrature_points=int(raw.get("quadrature_points", 64)),
        window=window,
    )


# ---------------------------------------------------------------------------
# spectra CSV
# ---------------------------------------------------------------------------


def write_spectrum_csv(path, result):
    with open(path, "w", newline="", encoding="utf8") as f:
        writer = csv.writer(f)
        writer.writerow(["index", "eigenvalue", "stable", "multiplicity_group"])
        for i, lam in enumerate(result.eigenvalues):
            writer.writerow(
                [i, f"{lam:.16e}", int(result.stable[i]), int(result.multiplicity_group[i])]
            )


def read_spectrum_csv(path):
    rows = []
    with open(path, newline="", encoding="utf8") as f:
        reader = csv.DictReader(f)
        for row in reader:
            rows.append(
                (
                    int(row["index"]),
                    float(row["eigenvalue"]),
                    bool(int(row["stable"])),
                    int(row["multiplicity_group"]),
                )
            )
    return rows


# ---------------------------------------------------------------------------
# operator cache
# ---------------------------------------------------------------------------


def save_operator(path, op):
    header = _HEADER.pack(
        _MAGIC, _VERSION, op.geometry.n, op.m, op.box.radius, op.geometry.digest
    )
    payload = np.ascontiguousarray(op.matrix, dtype="<c16")
    with open(path, "wb") as f:
        f.write(header)
        f.write(payload.tobytes())


def load_operator(path, geometry):
    with open(path, "rb") as f:
        head = f.read(_HEADER.size)
        magic, version, n, m, radius, digest = _HEADER.unpack(head)
        if magic != _MAGIC or version != _VERSION:
            raise NCTorusError(f"bad operator cache header in {path}")
        if n != geometry.n or digest != geometry.digest:
            raise NCTorusError("operator cache does not match the geometry")
        box = LatticeBox(n, radius)
        dim = m * box.size
        payload = np.frombuffer(f.read(dim * dim * 16), dtype="<c16").reshape(dim, dim)
    return CompressedOperator(geometry, box, m, payload.astype(complex), provenance=f"cache:{path}")

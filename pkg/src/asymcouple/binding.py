"""Binding drifts that pull the second copy of a coupled pair onto the first.

For each model the binding force ``G(x, y)`` lives in noise space (it is
multiplied by the noise map ``Q`` inside the integrator) and vanishes
identically on the diagonal ``x = y``: every term carries a factor of
``rho = y - x``.

The toy and reaction-diffusion constructions force a designated linear
combination ``zeta`` of the difference components to obey an explicit
linear contraction; Ginzburg-Landau cancels the non-contracting linear
rates mode by mode; the chain derives its scalar force symbolically by
cascading Lie derivatives down the nearest-neighbour structure until the
forced site is reached.  The cascade is built for the same truncated
system the integrator runs, so its identities hold for the simulated
dynamics by construction.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .models import ModelSpec
from .polynomials import (
    CompiledPolynomial,
    IndexedPolynomial,
    PolyVectorField,
    compile_polynomial,
    format_polynomial,
    lie_derivative,
    parse_polynomial,
)


class BindingError(ValueError):
    pass


@dataclass
class BindingSpec:
    """A binding force plus its diagnostic contraction variables."""

    model_id: str
    force: Callable[[np.ndarray, np.ndarray], np.ndarray]  # (..., dim)² -> (..., n_noise)
    n_noise: int
    zeta_map: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    n_zeta: int = 0
    cascade: "ZetaCascade | None" = None


# -- toy model -----------------------------------------------------------------


def toy_binding(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Scalar force making ``zeta = rho_1 + 3 rho_2`` obey ``dzeta/dt = -2 zeta``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    rho = y - x
    zeta = rho[..., 0] + 3.0 * rho[..., 1]
    d0 = 2.0 * rho[..., 0] + rho[..., 1] - rho[..., 0] * (
        x[..., 0] ** 2 + x[..., 0] * y[..., 0] + y[..., 0] ** 2
    )
    d1 = 2.0 * rho[..., 1] + rho[..., 0] - rho[..., 1] * (
        x[..., 1] ** 2 + x[..., 1] * y[..., 1] + y[..., 1] ** 2
    )
    return -2.0 * zeta - (d0 + 3.0 * d1)


def toy_zeta(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    rho = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
    return (rho[..., 0] + 3.0 * rho[..., 1])[..., None]


# -- Ginzburg-Landau -----------------------------------------------------------


def gl_binding(x: np.ndarray, y: np.ndarray, model: ModelSpec) -> np.ndarray:
    """Mode-wise force ``G_k = -(2 + λ_k)/q_k · rho_k`` on the forced modes.

    The coupled linear operator then has diagonal entry -1 on every
    forced mode, so the full diagonal is bounded by ``-gap``.
    """
    rho = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
    lam = model.linear_spectrum[model.noise_dims] - 1.0
    return -(2.0 + lam) / model.noise_coeffs * rho[..., model.noise_dims]


def gl_coupled_diagonal(model: ModelSpec) -> np.ndarray:
    """Diagonal of the difference-process linear operator with binding on."""
    diag = model.linear_spectrum.copy()
    diag[model.noise_dims] = -1.0
    return diag


# -- reaction-diffusion --------------------------------------------------------


def rd_binding(x: np.ndarray, y: np.ndarray, model: ModelSpec) -> np.ndarray:
    """Force on the u-modes making ``zeta = rho_u + 3 rho_v`` solve the damped
    heat equation ``dzeta/dt = Δzeta - zeta`` mode by mode."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    half = model.dim // 2
    rho = y - x
    zeta = rho[..., :half] + 3.0 * rho[..., half:]
    delta = model.linear_spectrum * rho + model.nonlinearity(y) - model.nonlinearity(x)
    lap = model.aux["laplacian"]
    return (lap - 1.0) * zeta - (delta[..., :half] + 3.0 * delta[..., half:])


def rd_zeta(x: np.ndarray, y: np.ndarray, model: ModelSpec) -> np.ndarray:
    half = model.dim // 2
    rho = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
    return rho[..., :half] + 3.0 * rho[..., half:]


# -- chain cascade -------------------------------------------------------------


def chain_vector_field(model: ModelSpec) -> PolyVectorField:
    """Joint drift field of the coupled chain in the variables (x_i, rho_i).

    The second copy is eliminated through ``y = x + rho``; the binding
    force is left out (it is what the cascade will construct), and the
    boundary is closed with ``x_M = rho_M = 0``.
    """
    if model.id != "chain":
        raise BindingError("chain_vector_field requires a chain model")
    a2 = model.params["a_squared"]
    m = model.dim
    xv = [IndexedPolynomial.variable("x", i) for i in range(m)]
    rv = [IndexedPolynomial.variable("rho", i) for i in range(m)]
    zero = IndexedPolynomial()
    rows: dict[tuple[str, int], IndexedPolynomial] = {}
    for i in range(m):
        left_x = xv[i - 1] if i >= 1 else zero
        right_x = xv[i + 1] if i + 1 < m else zero
        rows[("x", i)] = (a2 - i**2) * xv[i] + left_x + right_x - xv[i] ** 3
        left_r = rv[i - 1] if i >= 1 else zero
        right_r = rv[i + 1] if i + 1 < m else zero
        # rho * (x² + x y + y²) with y = x + rho
        cubic = rv[i] * (3 * xv[i] ** 2 + 3 * xv[i] * rv[i] + rv[i] ** 2)
        rows[("rho", i)] = (a2 - i**2) * rv[i] + left_r + right_r - cubic
    return PolyVectorField(rows=rows, truncation=m)


@dataclass
class ZetaCascade:
    """Recursively derived contraction variables for the chain.

    ``zetas[l-1]`` is ``zeta_l = rho_{k*-l} + Q_l`` for ``l = 1..k*``;
    ``q_polys[l]`` holds ``Q_l`` (``Q_1 = 0``) together with the closing
    ``Q_{k*+1}``; ``g_poly`` is the force with
    ``d zeta_{k*}/dt = -zeta_{k*}`` along the coupled flow.
    """

    a_squared: float
    truncation: int
    k_star: int
    c1: float
    zetas: list[IndexedPolynomial]
    q_polys: dict[int, IndexedPolynomial]
    g_poly: IndexedPolynomial
    field: PolyVectorField
    var_order: tuple = field(default=())
    _g_compiled: CompiledPolynomial | None = field(default=None, repr=False)
    _zeta_compiled: list[CompiledPolynomial] = field(default_factory=list, repr=False)

    def state_values(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.shape[-1] < self.truncation or y.shape[-1] < self.truncation:
            raise BindingError(
                f"state has {x.shape[-1]} components; cascade needs {self.truncation}"
            )
        return np.concatenate([x, y - x], axis=-1)

    def force(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return self._g_compiled.evaluate(self.state_values(x, y))

    def zeta_values(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        values = self.state_values(x, y)
        return np.stack([cp.evaluate(values) for cp in self._zeta_compiled], axis=-1)


def _warn_on_awkward_coefficients(polys, scale_bits: int = 16, magnitude: float = 2.0**40):
    scale = float(1 << scale_bits)
    for poly in polys:
        for coef in poly.terms.values():
            if abs(coef) > magnitude or coef * scale != round(coef * scale):
                warnings.warn(
                    f"cascade coefficient {coef!r} is not a small dyadic rational; "
                    "symbolic identities may carry rounding error",
                    stacklevel=3,
                )
                return


def build_zeta_cascade(model: ModelSpec) -> ZetaCascade:
    """Derive the chain's contraction variables and its binding force.

    Starting from ``zeta_1 = rho_{k*-1}`` each level adds the Lie
    derivative along the force-free coupled field, which shifts the
    leading difference component one site closer to the forced end:
    ``zeta_{l+1} = L zeta_l + zeta_l``.  At the last level the force is
    read off as ``G = -zeta_{k*} - L zeta_{k*}``.
    """
    if model.id != "chain":
        raise BindingError("build_zeta_cascade requires a chain model")
    k_star = model.params["k_star"]
    m = model.dim
    if m < k_star + 2:
        raise BindingError(f"truncation overflow: need at least {k_star + 2} sites, have {m}")
    fld = chain_vector_field(model)
    a2 = model.params["a_squared"]
    c1 = a2 - (k_star - 1) ** 2

    zetas = [IndexedPolynomial.variable("rho", k_star - 1)]
    for _ in range(1, k_star):
        zetas.append(lie_derivative(zetas[-1], fld) + zetas[-1])
    q_polys = {
        level: zetas[level - 1] - IndexedPolynomial.variable("rho", k_star - level)
        for level in range(1, k_star + 1)
    }
    q_polys[k_star + 1] = lie_derivative(zetas[-1], fld)
    g_poly = -zetas[-1] - q_polys[k_star + 1]
    _warn_on_awkward_coefficients(zetas + [g_poly])

    var_order = tuple(("x", i) for i in range(m)) + tuple(("rho", i) for i in range(m))
    cascade = ZetaCascade(
        a_squared=a2,
        truncation=m,
        k_star=k_star,
        c1=c1,
        zetas=zetas,
        q_polys=q_polys,
        g_poly=g_poly,
        field=fld,
        var_order=var_order,
        _g_compiled=compile_polynomial(g_poly, var_order),
        _zeta_compiled=[compile_polynomial(z, var_order) for z in zetas],
    )
    return cascade


def chain_binding(cascade: ZetaCascade, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Evaluate the derived scalar force at ``(x, rho = y - x)``."""
    return cascade.force(x, y)


def cascade_shape_ok(cascade: ZetaCascade) -> list[str]:
    """Check the structural invariants of a built cascade.

    Returns a list of violation messages (empty when everything holds):
    unit leading coefficient on ``rho_{k*-l}``, remainder supported on
    indices ``>= k*-l+1``, a ``rho`` factor in every remainder term, and
    the stored level-to-level consistency.
    """
    problems = []
    k = cascade.k_star
    for level, zeta in enumerate(cascade.zetas, start=1):
        lead = zeta.coefficient(((("rho", k - level), 1),))
        if lead != 1.0:
            problems.append(f"zeta_{level}: leading rho[{k - level}] coefficient is {lead}")
        q = cascade.q_polys[level]
        min_idx = q.min_index()
        if min_idx is not None and min_idx < k - level + 1:
            problems.append(f"Q_{level} touches index {min_idx} < {k - level + 1}")
        for mono in q.terms:
            if not any(fam == "rho" for (fam, _), _ in mono):
                problems.append(f"Q_{level} has a term without a rho factor: {mono}")
    for level in range(1, k):
        expected = lie_derivative(cascade.zetas[level - 1], cascade.field) + cascade.zetas[level - 1]
        if expected != cascade.zetas[level]:
            problems.append(f"zeta_{level + 1} != L zeta_{level} + zeta_{level}")
    for mono in cascade.g_poly.terms:
        if not any(fam == "rho" for (fam, _), _ in mono):
            problems.append(f"G has a term without a rho factor: {mono}")
    return problems


# -- cascade text dump -----------------------------------------------------------


def dump_cascade_text(cascade: ZetaCascade) -> str:
    lines = [
        f"# zeta cascade: a_squared={cascade.a_squared!r} k_star={cascade.k_star} "
        f"truncation={cascade.truncation} c1={cascade.c1!r}"
    ]
    for level, zeta in enumerate(cascade.zetas, start=1):
        lines.append(f"[zeta {level}]")
        lines.append(format_polynomial(zeta))
        lines.append(f"[Q {level}]")
        lines.append(format_polynomial(cascade.q_polys[level]))
    lines.append(f"[Q {cascade.k_star + 1}]")
    lines.append(format_polynomial(cascade.q_polys[cascade.k_star + 1]))
    lines.append("[G]")
    lines.append(format_polynomial(cascade.g_poly))
    return "\n".join(lines) + "\n"


def parse_cascade_dump(text: str) -> dict[str, IndexedPolynomial]:
    """Parse a cascade dump back into named polynomials ('zeta 1', 'Q 2', 'G')."""
    sections: dict[str, list[str]] = {}
    current: list[str] | None = None
    for line in text.splitlines():
        stripped = line.strip()
        if stripped.startswith("[") and stripped.endswith("]"):
            current = sections.setdefault(stripped[1:-1], [])
        elif current is not None and stripped and not stripped.startswith("#"):
            current.append(stripped)
    return {name: parse_polynomial("\n".join(body)) for name, body in sections.items()}


# -- assembly ---------------------------------------------------------------------


def make_binding(model: ModelSpec, cascade: ZetaCascade | None = None) -> BindingSpec:
    """Build the model's binding; raises if the construction is ill-posed."""
    if np.any(model.noise_coeffs == 0.0):
        raise BindingError("binding force undefined: a forced mode has q = 0")
    if model.id == "toy2d":
        return BindingSpec(
            model_id=model.id,
            force=lambda x, y: toy_binding(x, y)[..., None],
            n_noise=1,
            zeta_map=toy_zeta,
            n_zeta=1,
        )
    if model.id == "ginzburg_landau":
        return BindingSpec(
            model_id=model.id,
            force=lambda x, y: gl_binding(x, y, model),
            n_noise=model.n_noise,
        )
    if model.id == "reaction_diffusion":
        return BindingSpec(
            model_id=model.id,
            force=lambda x, y: rd_binding(x, y, model),
            n_noise=model.n_noise,
            zeta_map=lambda x, y: rd_zeta(x, y, model),
            n_zeta=model.dim // 2,
        )
    if model.id == "chain":
        if cascade is None:
            cascade = build_zeta_cascade(model)
        if cascade.truncation != model.dim or cascade.a_squared != model.params["a_squared"]:
            raise BindingError("cascade was built for different chain parameters")
        return BindingSpec(
            model_id=model.id,
            force=lambda x, y: cascade.force(x, y)[..., None],
            n_noise=1,
            zeta_map=cascade.zeta_values,
            n_zeta=cascade.k_star,
            cascade=cascade,
        )
    raise BindingError(f"no binding construction for model {model.id!r}")


def null_binding(model: ModelSpec) -> BindingSpec:
    """Zero force: the coupled pair degenerates to two independent copies
    driven by the same noise.  Useful as a diagnostic null case."""

    def force(x, y):
        shape = np.broadcast_shapes(np.shape(x)[:-1], np.shape(y)[:-1])
        return np.zeros(shape + (model.n_noise,))

    return BindingSpec(model_id=model.id, force=force, n_noise=model.n_noise)

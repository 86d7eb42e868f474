"""Finite-dimensional model definitions: drift, noise map, Lyapunov function.

Four systems are provided, all in the shape ``dx = (A x + F(x)) dt + Q dω``
with ``A`` diagonal in the chosen basis:

* ``toy2d``        two coupled double-well modes, noise on the first only;
* ``ginzburg_landau``  spectral truncation of a 1d stochastic Ginzburg-Landau
  equation on ``[-L, L]`` with periodic boundary, noise on the first
  ``N`` Fourier modes;
* ``reaction_diffusion``  a two-component system where only the first
  component is forced (mode-wise white noise across its truncation);
* ``chain``        nearest-neighbour chain with noise on site 0 only.

States are coefficient vectors in the diagonalizing basis; all maps are
vectorized over leading batch axes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class LyapunovSpec:
    """Which Lyapunov function the model carries.

    ``norm_domination_c`` records a constant with
    ``||x|| <= c (1 + V(x))`` on the truncated state space.
    """

    name: str  # one of: l2_norm, linf_norm, l2_norm_pow_p
    p: float = 1.0
    norm_domination_c: float = 1.0


@dataclass
class ModelSpec:
    id: str
    dim: int
    linear_spectrum: np.ndarray
    nonlinearity: Callable[[np.ndarray], np.ndarray]
    noise_dims: np.ndarray
    noise_coeffs: np.ndarray
    params: dict
    lyapunov_spec: LyapunovSpec
    aux: dict = field(default_factory=dict, repr=False)

    @property
    def n_noise(self) -> int:
        return len(self.noise_dims)


def drift(model: ModelSpec, state: np.ndarray) -> np.ndarray:
    """Full deterministic drift ``A x + F(x)``."""
    state = np.asarray(state, dtype=float)
    if state.shape[-1] != model.dim:
        raise ModelError(f"state has length {state.shape[-1]}, expected {model.dim}")
    if not np.all(np.isfinite(state)):
        raise ModelError("non-finite state")
    return model.linear_spectrum * state + model.nonlinearity(state)


def lyapunov(model: ModelSpec, state: np.ndarray) -> np.ndarray:
    """Evaluate the model's Lyapunov function V on a (batch of) state(s)."""
    state = np.asarray(state, dtype=float)
    spec = model.lyapunov_spec
    if spec.name == "l2_norm":
        return np.linalg.norm(state, axis=-1)
    if spec.name == "l2_norm_pow_p":
        return np.linalg.norm(state, axis=-1) ** spec.p
    if spec.name == "linf_norm":
        half = model.dim // 2
        basis = model.aux["basis"]
        grid_u = state[..., :half] @ basis.T
        grid_v = state[..., half:] @ basis.T
        return np.abs(grid_u).max(axis=-1) + np.abs(grid_v).max(axis=-1)
    raise ModelError(f"unknown Lyapunov spec {spec.name!r}")


def apply_noise(model: ModelSpec, increments: np.ndarray) -> np.ndarray:
    """Map noise-space increments to state space: q_i at the forced
    coordinates, zero elsewhere."""
    increments = np.asarray(increments, dtype=float)
    if increments.shape[-1] != model.n_noise:
        raise ModelError(
            f"noise increment has length {increments.shape[-1]}, expected {model.n_noise}"
        )
    out = np.zeros(increments.shape[:-1] + (model.dim,))
    out[..., model.noise_dims] = model.noise_coeffs * increments
    return out


# -- toy model ------------------------------------------------------------


def make_toy2d() -> ModelSpec:
    """Two modes, both linearly unstable, nudged toward each other;
    Brownian forcing on the first coordinate only."""

    def nonlin(x):
        out = np.empty_like(x)
        out[..., 0] = x[..., 1] - x[..., 0] ** 3
        out[..., 1] = x[..., 0] - x[..., 1] ** 3
        return out

    return ModelSpec(
        id="toy2d",
        dim=2,
        linear_spectrum=np.array([2.0, 2.0]),
        nonlinearity=nonlin,
        noise_dims=np.array([0]),
        noise_coeffs=np.array([1.0]),
        params={},
        lyapunov_spec=LyapunovSpec(name="l2_norm_pow_p", p=2.0, norm_domination_c=1.0),
    )


# -- real Fourier basis on [-L, L] ------------------------------------------


def _fourier_basis(n_modes: int, length: float) -> tuple[np.ndarray, np.ndarray, float]:
    """Orthonormal real Fourier basis sampled on a uniform periodic grid.

    Mode ordering: index 0 is the constant, index 2m-1 is cos(m pi x / L),
    index 2m is sin(m pi x / L).  Returns (basis matrix of shape
    (n_grid, n_modes), Laplacian eigenvalues per mode, quadrature weight).
    The grid is fine enough that projections of cubes of band-limited
    functions are exact (no aliasing back into the retained modes).
    """
    m_max = (n_modes + 1) // 2
    n_grid = 4 * m_max + 4
    x = -length + (2.0 * length / n_grid) * np.arange(n_grid)
    basis = np.empty((n_grid, n_modes))
    eigs = np.empty(n_modes)
    basis[:, 0] = 1.0 / math.sqrt(2.0 * length)
    eigs[0] = 0.0
    for idx in range(1, n_modes):
        m = (idx + 1) // 2
        freq = m * math.pi / length
        phase = np.cos(freq * x) if idx % 2 == 1 else np.sin(freq * x)
        basis[:, idx] = phase / math.sqrt(length)
        eigs[idx] = -(freq**2)
    weight = 2.0 * length / n_grid
    return basis, eigs, weight


def _spectral_cube(state_block: np.ndarray, basis: np.ndarray, weight: float) -> np.ndarray:
    grid = state_block @ basis.T
    return (grid**3) @ basis * weight


def make_ginzburg_landau(
    modes: int = 64,
    forced_modes: int = 3,
    length: float = math.pi,
    noise_coeffs=None,
) -> ModelSpec:
    """Spectral Ginzburg-Landau truncation ``du = (Δu + u - u³)dt + Q dω``.

    ``forced_modes`` must cover every mode whose linear rate ``λ_k + 1``
    is non-negative, so that the unforced remainder is uniformly
    contracting; the resulting gap ``a = min(1, -(λ_N + 1))`` is stored
    in ``params["gap"]``.
    """
    if modes < 2:
        raise ModelError("need at least two modes")
    if not 1 <= forced_modes < modes:
        raise ModelError("forced_modes must lie in [1, modes)")
    basis, eigs, weight = _fourier_basis(modes, length)
    spectrum = eigs + 1.0
    if spectrum[forced_modes] >= 0.0:
        raise ModelError(
            "unforced modes must be contracting: increase forced_modes "
            f"(mode {forced_modes} has linear rate {spectrum[forced_modes]:+.3f})"
        )
    if noise_coeffs is None:
        noise_coeffs = np.ones(forced_modes)
    noise_coeffs = np.asarray(noise_coeffs, dtype=float)
    if noise_coeffs.shape != (forced_modes,) or np.any(noise_coeffs <= 0.0):
        raise ModelError("noise_coeffs must be positive, one per forced mode")
    gap = min(1.0, -spectrum[forced_modes])

    def nonlin(u):
        return -_spectral_cube(u, basis, weight)

    return ModelSpec(
        id="ginzburg_landau",
        dim=modes,
        linear_spectrum=spectrum,
        nonlinearity=nonlin,
        noise_dims=np.arange(forced_modes),
        noise_coeffs=noise_coeffs,
        params={
            "modes": modes,
            "forced_modes": forced_modes,
            "length": length,
            "gap": gap,
            "noise_coeffs": [float(q) for q in noise_coeffs],
        },
        lyapunov_spec=LyapunovSpec(name="l2_norm", norm_domination_c=1.0),
        aux={"basis": basis, "weight": weight, "laplacian": eigs},
    )


def make_reaction_diffusion(
    modes_per_component: int = 16,
    length: float = math.pi,
) -> ModelSpec:
    """Two-component reaction-diffusion truncation.

    The state stacks the mode coefficients of ``u`` then ``v``:

        du = (Δu + 2u + v - u³) dt + dω,    dv = (Δv + 2v + u - v³) dt,

    with one independent Brownian increment per retained ``u`` mode (the
    finite-dimensional stand-in for space-time white noise on ``u``).
    """
    if modes_per_component < 1:
        raise ModelError("need at least one mode per component")
    basis, eigs, weight = _fourier_basis(modes_per_component, length)
    half = modes_per_component
    spectrum = np.concatenate([eigs + 2.0, eigs + 2.0])

    def nonlin(state):
        u = state[..., :half]
        v = state[..., half:]
        fu = v - _spectral_cube(u, basis, weight)
        fv = u - _spectral_cube(v, basis, weight)
        return np.concatenate([fu, fv], axis=-1)

    return ModelSpec(
        id="reaction_diffusion",
        dim=2 * half,
        linear_spectrum=spectrum,
        nonlinearity=nonlin,
        noise_dims=np.arange(half),
        noise_coeffs=np.ones(half),
        params={"modes_per_component": half, "length": length},
        lyapunov_spec=LyapunovSpec(
            name="linf_norm", norm_domination_c=math.sqrt(2.0 * length)
        ),
        aux={"basis": basis, "weight": weight, "laplacian": eigs},
    )


# -- nearest-neighbour chain -------------------------------------------------


def chain_k_star(a_squared: float) -> int:
    """First site index whose linear damping clears the margin:
    smallest k > 0 with k² - a² >= 3."""
    k = math.isqrt(max(0, math.ceil(a_squared + 3.0) - 1)) + 1
    while k**2 - a_squared < 3.0:
        k += 1
    while k > 1 and (k - 1) ** 2 - a_squared >= 3.0:
        k -= 1
    return k


def make_chain(
    a_squared: float = 5.0,
    truncation: int | None = None,
    lyapunov_power: float = 2.0,
) -> ModelSpec:
    """Chain ``dx_0 = (a² x_0 + x_1 - x_0³)dt + dω`` with
    ``dx_k = ((a² - k²) x_k + x_{k-1} + x_{k+1} - x_k³)dt`` for ``k >= 1``
    and closure ``x_M = 0`` at the truncation boundary."""
    if a_squared < 0:
        raise ModelError("a_squared must be non-negative")
    k_star = chain_k_star(a_squared)
    if truncation is None:
        truncation = 4 * k_star
    if a_squared >= (truncation - 1) ** 2:
        raise ModelError("truncation boundary must be strongly damped: a² < (M-1)²")
    if truncation < k_star + 2:
        raise ModelError(f"truncation {truncation} too small; need at least {k_star + 2}")
    sites = np.arange(truncation)
    spectrum = a_squared - sites.astype(float) ** 2

    def nonlin(x):
        out = -(x**3)
        out[..., 1:] += x[..., :-1]
        out[..., :-1] += x[..., 1:]
        return out

    return ModelSpec(
        id="chain",
        dim=truncation,
        linear_spectrum=spectrum,
        nonlinearity=nonlin,
        noise_dims=np.array([0]),
        noise_coeffs=np.array([1.0]),
        params={
            "a_squared": a_squared,
            "k_star": k_star,
            "truncation": truncation,
            "lyapunov_power": lyapunov_power,
        },
        lyapunov_spec=LyapunovSpec(
            name="l2_norm_pow_p", p=lyapunov_power, norm_domination_c=1.0
        ),
    )


_FACTORIES = {
    "toy2d": make_toy2d,
    "ginzburg_landau": make_ginzburg_landau,
    "reaction_diffusion": make_reaction_diffusion,
    "chain": make_chain,
}


def make_model(model_id: str, **params) -> ModelSpec:
    try:
        factory = _FACTORIES[model_id]
    except KeyError:
        raise ModelError(
            f"unknown model {model_id!r}; valid ids: {sorted(_FACTORIES)}"
        ) from None
    return factory(**params)

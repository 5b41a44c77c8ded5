"""High-accuracy reference solutions, independent of any trained model.

Burgers is evaluated through the Cole-Hopf integral form with
Gauss-Hermite quadrature; Allen-Cahn by a method-of-lines solve on a
fine grid (cached to disk); the reaction-rate inverse problem's u by a
second-order finite-difference solve of the two-point boundary-value
problem with the exact rate field.
"""

from __future__ import annotations

import functools
import math
import os
import struct
import tempfile
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline, RegularGridInterpolator
from scipy.linalg import solve_banded
from scipy.special import roots_hermite

__all__ = [
    "burgers_solution",
    "allen_cahn_solution",
    "allen_cahn_field",
    "allen_cahn_convergence_gap",
    "reaction_rate_u",
    "reaction_rate_du",
    "default_cache_dir",
]

BURGERS_NU = 0.01 / math.pi
_QUAD_NODES = 128  # >= 100 per the accuracy budget
_AC_D = 0.001
_AC_NX = 2000  # space intervals; the 201-point test grid is every 10th node
_AC_NT = 201


def default_cache_dir() -> Path:
    env = os.environ.get("GPINN_CACHE")
    if env:
        return Path(env)
    return Path.home() / ".cache" / "gpinn"


# ---------------------------------------------------------------------------
# Burgers via Cole-Hopf
# ---------------------------------------------------------------------------


@functools.lru_cache(maxsize=4)
def _hermite_rule(n: int):
    z, w = roots_hermite(n)
    return z, w


def burgers_solution(x, t, nu: float = BURGERS_NU, n_quad: int = _QUAD_NODES) -> np.ndarray:
    """u(x, t) for u_t + u u_x = nu u_xx, u(x,0) = -sin(pi x), u(+-1,t)=0.

    Returns shape (len(x), len(t)).  The integrand is rescaled by its
    largest exponent before exponentiation so the quotient stays
    well-conditioned for small nu.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    t = np.atleast_1d(np.asarray(t, dtype=float))
    z, w = _hermite_rule(n_quad)
    out = np.empty((x.size, t.size))
    for j, tj in enumerate(t):
        if tj <= 0.0:
            out[:, j] = -np.sin(np.pi * x)
            continue
        c = 2.0 * math.sqrt(nu * tj)
        arg = np.pi * (x[:, None] - c * z[None, :])
        expo = -np.cos(arg) / (2.0 * np.pi * nu)
        expo -= expo.max(axis=1, keepdims=True)
        kern = w[None, :] * np.exp(expo)
        num = -(kern * np.sin(arg)).sum(axis=1)
        den = kern.sum(axis=1)
        out[:, j] = num / den
    return out


# ---------------------------------------------------------------------------
# Allen-Cahn via method of lines
# ---------------------------------------------------------------------------


def _ac_rhs_factory(nx: int):
    h = 2.0 / nx

    def rhs(_t, u):
        # interior unknowns u_1..u_{nx-1}; walls fixed at -1
        d2 = np.empty_like(u)
        d2[1:-1] = u[2:] - 2.0 * u[1:-1] + u[:-2]
        d2[0] = u[1] - 2.0 * u[0] + (-1.0)
        d2[-1] = (-1.0) - 2.0 * u[-1] + u[-2]
        return _AC_D * d2 / (h * h) + 5.0 * (u - u**3)

    return rhs


def _ac_solve(nx: int, t_eval: np.ndarray) -> np.ndarray:
    """Solve on nx space intervals; returns (nx+1, len(t_eval)) field."""
    xg = np.linspace(-1.0, 1.0, nx + 1)
    u0 = xg**2 * np.cos(np.pi * xg)
    sol = solve_ivp(
        _ac_rhs_factory(nx),
        (0.0, float(t_eval[-1])),
        u0[1:-1],
        method="RK45",
        t_eval=t_eval,
        rtol=1e-8,
        atol=1e-10,
    )
    if not sol.success:  # pragma: no cover
        raise RuntimeError(f"Allen-Cahn reference solve failed: {sol.message}")
    full = np.empty((nx + 1, len(t_eval)))
    full[0] = -1.0
    full[-1] = -1.0
    full[1:-1] = sol.y
    full[:, 0] = u0
    return full


_CACHE_MAGIC = b"GPRF"


def _write_field(path: Path, x: np.ndarray, t: np.ndarray, field: np.ndarray) -> None:
    """Binary layout (little-endian): magic, u32 nx, u32 nt, f8 x grid,
    f8 t grid, f8 field row-major with shape (nx, nt).  Written via a
    temp file + atomic rename (single-writer safe)."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(_CACHE_MAGIC)
            fh.write(struct.pack("<II", x.size, t.size))
            fh.write(np.ascontiguousarray(x, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(t, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(field, dtype="<f8").tobytes())
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def _read_field(path: Path):
    with open(path, "rb") as fh:
        if fh.read(4) != _CACHE_MAGIC:
            raise ValueError(f"{path}: not a reference cache file")
        nx, nt = struct.unpack("<II", fh.read(8))
        x = np.frombuffer(fh.read(8 * nx), dtype="<f8")
        t = np.frombuffer(fh.read(8 * nt), dtype="<f8")
        field = np.frombuffer(fh.read(8 * nx * nt), dtype="<f8").reshape(nx, nt)
    return x.astype(float), t.astype(float), field.astype(float)


def _ac_grid_field(cache_dir, nx: int):
    """Raw second-order solve on nx intervals, subsampled to 201 x-nodes."""
    cache = Path(cache_dir) if cache_dir else default_cache_dir()
    path = cache / f"allen_cahn_{nx}.bin"
    if path.exists():
        return _read_field(path)
    t_eval = np.linspace(0.0, 1.0, _AC_NT)
    full = _ac_solve(nx, t_eval)
    stride = nx // 200
    if 200 * stride != nx:
        raise ValueError(f"nx={nx} must be a multiple of 200 for exact subsampling")
    x201 = np.linspace(-1.0, 1.0, nx + 1)[::stride]
    field = full[::stride]
    _write_field(path, x201, t_eval, field)
    return x201, t_eval, field


def allen_cahn_field(cache_dir=None):
    """The oracle field on the 201x201 test grid, cached to disk.

    Two nested second-order solves (nx and 2nx intervals) are combined by
    Richardson extrapolation; the plain nx=2000 solve still carries
    ~7e-5 of spatial error near the fronts, while the extrapolated field
    is converged below 1e-6 (checked by ``allen_cahn_convergence_gap``).
    """
    cache = Path(cache_dir) if cache_dir else default_cache_dir()
    path = cache / f"allen_cahn_rich_{_AC_NX}.bin"
    if path.exists():
        return _read_field(path)
    x, t, coarse = _ac_grid_field(cache_dir, _AC_NX)
    _, _, fine = _ac_grid_field(cache_dir, 2 * _AC_NX)
    field = (4.0 * fine - coarse) / 3.0
    _write_field(path, x, t, field)
    return x, t, field


def allen_cahn_convergence_gap(cache_dir=None) -> float:
    """Change in the extrapolated field when every grid spacing is halved
    (nx, 2nx) -> (2nx, 4nx), max over the shared 201x201 grid."""
    _, _, ref = allen_cahn_field(cache_dir)
    _, _, mid = _ac_grid_field(cache_dir, 2 * _AC_NX)
    _, _, fine = _ac_grid_field(cache_dir, 4 * _AC_NX)
    halved = (4.0 * fine - mid) / 3.0
    return float(np.abs(ref - halved).max())


def allen_cahn_solution(x, t, cache_dir=None) -> np.ndarray:
    """Reference u on an arbitrary grid within the domain; exact at the
    cached nodes, cubic-interpolated elsewhere."""
    xg, tg, field = allen_cahn_field(cache_dir)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    t = np.atleast_1d(np.asarray(t, dtype=float))
    interp = RegularGridInterpolator((xg, tg), field, method="cubic")
    XX, TT = np.meshgrid(x, t, indexing="ij")
    return interp(np.column_stack([XX.ravel(), TT.ravel()])).reshape(x.size, t.size)


# ---------------------------------------------------------------------------
# Reaction-rate inverse problem: u from the exact k(x)
# ---------------------------------------------------------------------------


def _rr_k(x):
    return 0.1 + np.exp(-0.5 * (x - 0.5) ** 2 / 0.15**2)


@functools.lru_cache(maxsize=1)
def _rr_solve(n: int = 4096):
    """Second-order FD solve of 0.01 u'' - k(x) u = sin(2 pi x), u(0)=u(1)=0."""
    lam = 0.01
    xg = np.linspace(0.0, 1.0, n + 1)
    h = 1.0 / n
    xi = xg[1:-1]
    main = -2.0 * lam / h**2 - _rr_k(xi)
    off = np.full(n - 2, lam / h**2)
    ab = np.zeros((3, n - 1))
    ab[0, 1:] = off
    ab[1] = main
    ab[2, :-1] = off
    rhs = np.sin(2.0 * np.pi * xi)
    ui = solve_banded((1, 1), ab, rhs)
    u = np.concatenate([[0.0], ui, [0.0]])
    spline = CubicSpline(xg, u)
    return spline


def reaction_rate_u(x) -> np.ndarray:
    """Reference solute concentration at x (vectorized)."""
    return np.asarray(_rr_solve()(np.asarray(x, dtype=float)), dtype=float)


def reaction_rate_du(x) -> np.ndarray:
    """Reference du/dx at x."""
    return np.asarray(_rr_solve()(np.asarray(x, dtype=float), 1), dtype=float)

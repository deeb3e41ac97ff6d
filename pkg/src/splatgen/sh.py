"""Real spherical-harmonic color evaluation and coefficient rotation.

Color per channel is stored as 16 coefficients (degree 3). Evaluation uses
the standard real SH basis constants; the rendered color is the basis dot
product plus a 0.5 offset, clamped at zero from below.
"""

from __future__ import annotations

import numpy as np

from .geometry import quat_to_matrix

SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199
SH_C2 = (
    1.0925484305920792,
    -1.0925484305920792,
    0.3153915652525205,
    -1.0925484305920792,
    0.5462742152960396,
)
SH_C3 = (
    -0.5900435899266435,
    2.890611442640554,
    -0.4570457994644658,
    0.3731763325901154,
    -0.4570457994644658,
    1.445305721320277,
    -0.5900435899266435,
)

NUM_COEFFS = 16
BAND_SLICES = (slice(0, 1), slice(1, 4), slice(4, 9), slice(9, 16))


def sh_basis(dirs: np.ndarray) -> np.ndarray:
    """Evaluate the 16 degree-3 basis functions at unit direction(s).

    Args:
        dirs: (3,) or (N, 3) unit vectors.

    Returns:
        (16,) or (N, 16) basis values, ordered DC, then bands 1..3.
    """
    dirs = np.asarray(dirs, dtype=float)
    single = dirs.ndim == 1
    d = dirs.reshape(-1, 3)
    x, y, z = d[:, 0], d[:, 1], d[:, 2]
    xx, yy, zz = x * x, y * y, z * z
    xy, yz, xz = x * y, y * z, x * z

    out = np.empty((d.shape[0], NUM_COEFFS))
    out[:, 0] = SH_C0
    out[:, 1] = -SH_C1 * y
    out[:, 2] = SH_C1 * z
    out[:, 3] = -SH_C1 * x
    out[:, 4] = SH_C2[0] * xy
    out[:, 5] = SH_C2[1] * yz
    out[:, 6] = SH_C2[2] * (2.0 * zz - xx - yy)
    out[:, 7] = SH_C2[3] * xz
    out[:, 8] = SH_C2[4] * (xx - yy)
    out[:, 9] = SH_C3[0] * y * (3.0 * xx - yy)
    out[:, 10] = SH_C3[1] * xy * z
    out[:, 11] = SH_C3[2] * y * (4.0 * zz - xx - yy)
    out[:, 12] = SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy)
    out[:, 13] = SH_C3[4] * x * (4.0 * zz - xx - yy)
    out[:, 14] = SH_C3[5] * z * (xx - yy)
    out[:, 15] = SH_C3[6] * x * (xx - 3.0 * yy)
    return out[0] if single else out


def eval_sh(sh: np.ndarray, view_dirs: np.ndarray) -> np.ndarray:
    """Evaluate view-dependent RGB from SH coefficients.

    Args:
        sh: (3, 16) or (N, 3, 16) coefficients per channel.
        view_dirs: (3,) or (N, 3) unit view directions.

    Returns:
        (3,) or (N, 3) colors, offset by 0.5 and clamped at 0 from below.
    """
    sh = np.asarray(sh, dtype=float)
    single = sh.ndim == 2
    coeffs = sh.reshape(-1, 3, NUM_COEFFS)
    basis = np.atleast_2d(sh_basis(view_dirs))
    rgb = np.einsum("nck,nk->nc", coeffs, basis) + 0.5
    rgb = np.maximum(rgb, 0.0)
    return rgb[0] if single else rgb


def rgb_to_dc(rgb: np.ndarray) -> np.ndarray:
    """DC coefficient(s) reproducing a flat color under eval_sh."""
    return (np.asarray(rgb, dtype=float) - 0.5) / SH_C0


def dc_to_rgb(dc: np.ndarray) -> np.ndarray:
    return np.asarray(dc, dtype=float) * SH_C0 + 0.5


def _fibonacci_directions(n: int) -> np.ndarray:
    # deterministic well-spread unit vectors, used to fit band rotations
    i = np.arange(n, dtype=float)
    golden = (1.0 + np.sqrt(5.0)) / 2.0
    z = 1.0 - (2.0 * i + 1.0) / n
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    phi = 2.0 * np.pi * i / golden
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1)

_FIT_DIRS = _fibonacci_directions(64)


def sh_rotation_matrix(rotation: np.ndarray) -> np.ndarray:
    """16x16 matrix M so that rotated coefficients are ``M @ sh_channel``.

    Rotating an emitter by R turns its directional color f(d) into f(R^-1 d);
    M reproduces that in coefficient space. Each band is closed under
    rotation, so M is block diagonal. Blocks are solved per band by
    least-squares against the basis sampled on fixed directions, which keeps
    them exactly consistent with :func:`sh_basis` conventions; the solve is
    over-determined (64 directions for at most 7 unknowns per row) and
    accurate to machine precision.
    """
    r = quat_to_matrix(np.asarray(rotation, dtype=float))
    basis_orig = sh_basis(_FIT_DIRS)          # (K, 16)
    basis_rot = sh_basis(_FIT_DIRS @ r)       # (K, 16), rows are Y(R^-1 d)

    m = np.zeros((NUM_COEFFS, NUM_COEFFS))
    m[0, 0] = 1.0
    for band in BAND_SLICES[1:]:
        a = basis_orig[:, band]
        b = basis_rot[:, band]
        # B = A @ X with X[j,k] the expansion of Y_k(R^-1 .) over Y_j;
        # the same X maps coefficient vectors: c' = X @ c
        x, *_ = np.linalg.lstsq(a, b, rcond=None)
        m[band, band] = x
    return m


def rotate_sh(sh: np.ndarray, rotation: np.ndarray) -> np.ndarray:
    """Rotate coefficient array(s) of shape (3, 16) or (N, 3, 16)."""
    m = sh_rotation_matrix(rotation)
    return np.asarray(sh, dtype=float) @ m.T

"""Principal components of a latent set, used as walk directions.

The eigendecomposition is a cyclic-by-rows Jacobi sweep over the explicitly
formed sample covariance. That is deliberate: the covariance here is at most
1024x1024, Jacobi is robust without pivoting heuristics, and an independent
Jacobi with a different sweep schedule serves as the test oracle.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import StoreError, ZeroVarianceError
from .latents import LatentSet, load_latents, mean_latent, save_latents

BASIS_SIDECAR_VERSION = 1

# Eigenvalues at or below RANK_TOL * lambda_max count as zero variance and
# are not returned: walking a null direction is a no-op.
RANK_TOL = 1e-12


@dataclass(frozen=True)
class PrincipalBasis:
    """Centering vector plus orthonormal components sorted by variance.

    ``components`` is (k, dim) with unit rows; ``variances`` the matching
    non-increasing eigenvalues of the sample covariance.
    """

    mean: np.ndarray
    components: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        comps = np.asarray(self.components, dtype=np.float64)
        variances = np.asarray(self.variances, dtype=np.float64)
        if comps.ndim != 2 or comps.shape[1] != mean.shape[0]:
            raise ValueError("components must be (k, dim) matching mean")
        if variances.shape != (comps.shape[0],):
            raise ValueError("variances length must match component count")
        gram = comps @ comps.T
        if np.max(np.abs(gram - np.eye(comps.shape[0]))) > 1e-6:
            raise ValueError("components are not orthonormal within 1e-6")
        if np.any(np.diff(variances) > 0):
            raise ValueError("variances must be non-increasing")
        if np.any(variances < 0):
            raise ValueError("variances must be nonnegative")
        for name, arr in (("mean", mean), ("components", comps), ("variances", variances)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def k(self) -> int:
        return self.components.shape[0]


def _jacobi_cyclic(a: np.ndarray, tol: float = 1e-12, max_sweeps: int = 64):
    """Diagonalize a symmetric matrix by cyclic-by-rows Jacobi rotations.

    Returns (eigenvalues, eigenvectors-as-columns), unsorted. Converges when
    the off-diagonal Frobenius norm drops below ``tol`` relative to the
    matrix norm.
    """
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    v = np.eye(n)
    scale = max(1.0, float(np.linalg.norm(a)))
    for _ in range(max_sweeps):
        off = float(np.linalg.norm(a - np.diag(np.diag(a))))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-30 * scale:
                    continue
                # Stable rotation choice (smaller root of the quadratic).
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                if tau >= 0:
                    t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = 0.0
                a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    return np.diag(a).copy(), v


def canonical_sign(vec: np.ndarray) -> np.ndarray:
    """Flip so the largest-magnitude coordinate is positive (first on ties)."""
    idx = int(np.argmax(np.abs(vec)))
    return -vec if vec[idx] < 0 else vec


def compute_pca(latents: LatentSet, k: int | None = None) -> PrincipalBasis:
    """Top-k eigenpairs of the sample covariance (divisor count-1).

    ``k=None`` keeps every direction with nonzero variance. Component count
    is additionally capped at min(count-1, dim), the rank bound of the
    sample covariance.
    """
    if latents.count < 2:
        raise ValueError("PCA needs at least 2 rows")
    if k is not None and (k < 1 or k > latents.dim):
        raise ValueError(f"k must lie in [1, {latents.dim}], got {k}")
    mean = mean_latent(latents)
    centered = latents.rows - mean
    cov = centered.T @ centered / (latents.count - 1)
    eigvals, eigvecs = _jacobi_cyclic(cov)
    order = np.argsort(-eigvals, kind="stable")
    eigvals = eigvals[order]
    eigvecs = eigvecs[:, order]
    lam_max = float(eigvals[0])
    if lam_max <= 0.0:
        raise ZeroVarianceError("all rows are identical; covariance has no variance")
    keep = eigvals > RANK_TOL * lam_max
    keep[min(latents.count - 1, latents.dim) :] = False
    eigvals = np.maximum(eigvals[keep], 0.0)
    comps = np.array([canonical_sign(eigvecs[:, i]) for i in range(len(keep)) if keep[i]])
    if k is not None:
        comps = comps[:k]
        eigvals = eigvals[:k]
    return PrincipalBasis(mean=mean, components=comps, variances=eigvals)


def project(w: np.ndarray, basis: PrincipalBasis, k: int) -> np.ndarray:
    """Coordinates of ``w`` on the first ``k`` components, after centering."""
    w = np.asarray(w, dtype=np.float64)
    if w.shape != basis.mean.shape:
        raise ValueError(f"dim mismatch: latent has {w.shape}, basis dim {basis.dim}")
    if k < 1 or k > basis.k:
        raise ValueError(f"k must lie in [1, {basis.k}], got {k}")
    return basis.components[:k] @ (w - basis.mean)


def source_hash(path) -> str:
    """Hex digest binding a basis to the latent file it was computed from."""
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def save_basis(basis: PrincipalBasis, directory, source: str = "") -> None:
    """Persist as two LVEC files plus a JSON sidecar.

    The sidecar records the variances at full float64 precision; only the
    vectors go through the binary32 store.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_latents(LatentSet(rows=basis.components), directory / "basis_components.lvec")
    save_latents(LatentSet(rows=basis.mean.reshape(1, -1)), directory / "basis_mean.lvec")
    sidecar = {
        "version": BASIS_SIDECAR_VERSION,
        "k": basis.k,
        "variances": [float(v) for v in basis.variances],
        "dim": basis.dim,
        "source_hash": source,
    }
    (directory / "basis.json").write_text(
        json.dumps(sidecar, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def load_basis(directory) -> tuple[PrincipalBasis, dict]:
    """Load a persisted basis; returns (basis, sidecar dict)."""
    directory = Path(directory)
    sidecar_path = directory / "basis.json"
    if not sidecar_path.exists():
        raise StoreError(f"{sidecar_path}: basis sidecar missing")
    sidecar = json.loads(sidecar_path.read_text(encoding="utf-8"))
    if sidecar.get("version") != BASIS_SIDECAR_VERSION:
        raise StoreError(f"{sidecar_path}: unsupported sidecar version")
    comps = load_latents(directory / "basis_components.lvec")
    mean = load_latents(directory / "basis_mean.lvec")
    variances = np.asarray(sidecar["variances"], dtype=np.float64)
    if comps.dim != sidecar["dim"] or comps.count != sidecar["k"]:
        raise StoreError(f"{directory}: sidecar disagrees with component file shape")
    # Re-normalize rows: the binary32 store perturbs unit norms in the last bits.
    rows = comps.rows / np.linalg.norm(comps.rows, axis=1, keepdims=True)
    basis = PrincipalBasis(mean=mean.rows[0], components=rows, variances=variances)
    return basis, sidecar

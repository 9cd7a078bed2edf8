"""Subspace Jacobian probing and pointwise geometric descriptors.

The probe restricts the generator's Jacobian to a random P-dimensional
orthonormal subspace W of the latent space, estimated column-wise with
forward differences (P+1 generator evaluations). The Gram matrix of the
probed columns is the local metric tensor; its spectrum yields the local
scaling (volume expansion), the principal direction, and the neighborhood
descriptors (rotation rate and spectral isolation).

Neighbor sampling protocol (part of the determinism contract): a
``numpy.random.Generator`` seeded with PCG64(seed) draws, for each of the K
neighbors in order, an E-dimensional standard normal vector which is
normalized to the unit sphere; the neighbor is z + radius * u.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DimensionMismatchError, EvaluationError

#: Forward-difference step, in latent units.
DEFAULT_FD_EPSILON = 1e-3

#: Relative threshold below which an eigenvalue is treated as a zero mode.
RANK_TOLERANCE = 1e-12

#: Relative spectral gap below which the top eigenpair counts as degenerate.
DEGENERACY_TOLERANCE = 1e-12

#: Denominator guard for the spectral isolation score.
SIS_FLOOR = 1e-8

#: Neighborhood sampling defaults shared by the rotation and isolation probes.
DEFAULT_NEIGHBOR_RADIUS = 1e-2
DEFAULT_NEIGHBOR_COUNT = 8

#: Default probed subspace dimension (must not exceed the latent dimension).
DEFAULT_SUBSPACE_DIM = 16


def as_latent(z, latent_dim: int | None = None) -> np.ndarray:
    """Validate and return a finite 1-D latent vector."""
    arr = np.asarray(z, dtype=float).ravel()
    if latent_dim is not None and arr.size != latent_dim:
        raise DimensionMismatchError(
            f"latent length {arr.size} != declared latent_dim {latent_dim}"
        )
    if not np.all(np.isfinite(arr)):
        raise ContractError("latent vector has non-finite entries")
    return arr


@dataclass
class SubspaceBasis:
    """Orthonormal columns spanning the probed subspace, plus its seed."""

    columns: np.ndarray  # E x P
    seed: int

    @property
    def latent_dim(self) -> int:
        return self.columns.shape[0]

    @property
    def subspace_dim(self) -> int:
        return self.columns.shape[1]


@dataclass
class SubspaceJacobian:
    """Forward-difference Jacobian restricted to the probed subspace."""

    matrix: np.ndarray  # D_output x P
    step: float
    output_shape: tuple[int, int, int]


@dataclass
class SpectralDecomposition:
    """Descending eigenvalues and sign-canonicalized unit eigenvectors."""

    eigenvalues: np.ndarray  # length P, descending
    eigenvectors: np.ndarray  # P x P, column i pairs with eigenvalues[i]

    @property
    def principal(self) -> np.ndarray:
        return self.eigenvectors[:, 0]


@dataclass
class CouplingProfile:
    """Mean |cosine| couplings of the base principal axis to neighbor axes.

    ``similarities[k]`` is the neighbor-averaged |cos| against the neighbor
    eigenvector of rank k+2 (the profile covers ranks 2..P); ``sis`` is the
    principal self-coupling divided by the floored sum of the profile.
    """

    similarities: np.ndarray
    sis: float
    degenerate: bool = False


@dataclass
class LocalComplexityResult:
    """Neighbor-averaged rotation rate of the principal axis."""

    value: float
    degenerate: bool = False


@dataclass
class NeighborhoodAnalysis:
    """Joint result of the rotation-rate and isolation probes.

    Both descriptors share one seeded neighbor set, so computing them jointly
    halves the generator evaluations; the standalone operations are thin
    wrappers and return identical values for identical seeds.
    """

    lc: float
    profile: CouplingProfile
    degenerate: bool


def sample_orthonormal_basis(latent_dim: int, subspace_dim: int, seed: int) -> SubspaceBasis:
    """Draw an E x P standard-normal matrix and orthonormalize its columns.

    Deterministic for a given seed; raises if subspace_dim exceeds latent_dim.
    """
    if subspace_dim < 1 or latent_dim < 1:
        raise ContractError("dimensions must be positive")
    if subspace_dim > latent_dim:
        raise DimensionMismatchError(
            f"subspace_dim {subspace_dim} > latent_dim {latent_dim}"
        )
    rng = np.random.Generator(np.random.PCG64(seed))
    raw = rng.standard_normal((latent_dim, subspace_dim))
    q, r = np.linalg.qr(raw)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return SubspaceBasis(columns=q * signs, seed=seed)


def fd_jacobian(generator, z, basis: SubspaceBasis, epsilon: float = DEFAULT_FD_EPSILON,
                scheme: str = "forward") -> SubspaceJacobian:
    """Finite-difference subspace Jacobian.

    The default forward scheme computes column i as
    (G(z + eps*w_i) - G(z)) / eps with exactly P+1 generator evaluations
    (base first, then columns in index order). The central scheme,
    (G(z + eps*w_i) - G(z - eps*w_i)) / (2 eps) at 2P evaluations, is
    second-order accurate and exists for oracle cross-checks. Non-finite
    generator output raises EvaluationError carrying the offending column
    index (None for the base point).
    """
    if epsilon <= 0:
        raise ContractError(f"epsilon must be positive, got {epsilon}")
    if scheme not in ("forward", "central"):
        raise ContractError(f"unknown difference scheme {scheme!r}")
    desc = generator.descriptor
    zv = as_latent(z, desc.latent_dim)
    if basis.latent_dim != desc.latent_dim:
        raise DimensionMismatchError(
            f"basis latent_dim {basis.latent_dim} != generator latent_dim {desc.latent_dim}"
        )

    def evaluate(point, column):
        out = np.asarray(generator.evaluate(point), dtype=float).ravel()
        if not np.all(np.isfinite(out)):
            where = "base point" if column is None else f"column {column}"
            raise EvaluationError(
                f"non-finite generator output at {where}", column=column
            )
        return out

    if scheme == "forward":
        base = evaluate(zv, None)
        cols = np.empty((base.size, basis.subspace_dim))
        for i in range(basis.subspace_dim):
            shifted = evaluate(zv + epsilon * basis.columns[:, i], i)
            cols[:, i] = (shifted - base) / epsilon
    else:
        cols = None
        for i in range(basis.subspace_dim):
            step = epsilon * basis.columns[:, i]
            plus = evaluate(zv + step, i)
            minus = evaluate(zv - step, i)
            if cols is None:
                cols = np.empty((plus.size, basis.subspace_dim))
            cols[:, i] = (plus - minus) / (2.0 * epsilon)
    return SubspaceJacobian(matrix=cols, step=epsilon, output_shape=desc.output_shape)


def metric_tensor(j: SubspaceJacobian) -> np.ndarray:
    """Local metric tensor J^T J, symmetrized to kill rounding asymmetry."""
    matrix = np.asarray(j.matrix if isinstance(j, SubspaceJacobian) else j, dtype=float)
    if not np.all(np.isfinite(matrix)):
        raise ContractError("jacobian has non-finite entries")
    a = matrix.T @ matrix
    return (a + a.T) / 2.0


def eigendecompose(a) -> SpectralDecomposition:
    """Descending eigendecomposition of a symmetric metric tensor.

    Each eigenvector is sign-canonicalized so its largest-magnitude entry is
    positive (ties break to the first such entry). Raises ContractError on
    inputs that are asymmetric beyond tolerance.
    """
    mat = np.asarray(a, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise DimensionMismatchError(f"expected square matrix, got {mat.shape}")
    scale = max(1.0, float(np.abs(mat).max()))
    if np.abs(mat - mat.T).max() > 1e-10 * scale:
        raise ContractError("metric tensor is not symmetric within tolerance")
    lam, vec = np.linalg.eigh(mat)
    lam = lam[::-1].copy()
    vec = vec[:, ::-1].copy()
    for i in range(vec.shape[1]):
        pivot = int(np.argmax(np.abs(vec[:, i])))
        if vec[pivot, i] < 0:
            vec[:, i] = -vec[:, i]
    return SpectralDecomposition(eigenvalues=lam, eigenvectors=vec)


def local_scaling(d: SpectralDecomposition, rank_tolerance: float = RANK_TOLERANCE) -> float:
    """Half the log-sum of eigenvalues above the relative rank threshold.

    Zero modes (eigenvalues at or below rank_tolerance * max eigenvalue) are
    skipped. Returns -inf when every eigenvalue falls below the threshold;
    callers flag that sentinel in their records.
    """
    lam = np.asarray(d.eigenvalues, dtype=float)
    if not np.all(np.isfinite(lam)):
        raise ContractError("eigenvalues must be finite")
    threshold = rank_tolerance * max(float(lam.max(initial=0.0)), 1e-300)
    kept = lam[lam > threshold]
    if kept.size == 0:
        return float("-inf")
    return float(0.5 * np.log(kept).sum())


def principal_projection(j: SubspaceJacobian, d: SpectralDecomposition) -> np.ndarray:
    """Project the principal latent axis to image space: J_sub . V1, as C x H x W."""
    if j.matrix.shape[1] != d.eigenvectors.shape[0]:
        raise DimensionMismatchError(
            f"jacobian columns {j.matrix.shape[1]} != spectrum size {d.eigenvectors.shape[0]}"
        )
    flat = j.matrix @ d.principal
    c, h, w = j.output_shape
    if flat.size != c * h * w:
        raise DimensionMismatchError(
            f"projection length {flat.size} != C*H*W = {c * h * w}"
        )
    return flat.reshape(j.output_shape)


def _neighbor_points(z: np.ndarray, radius: float, count: int, seed: int):
    rng = np.random.Generator(np.random.PCG64(seed))
    for _ in range(count):
        v = rng.standard_normal(z.size)
        yield z + radius * (v / np.linalg.norm(v))


def _is_degenerate(d: SpectralDecomposition) -> bool:
    lam = d.eigenvalues
    if lam.size < 2:
        return False
    return bool(lam[0] - lam[1] < DEGENERACY_TOLERANCE * lam[0])


def neighborhood_analysis(
    generator,
    z,
    basis: SubspaceBasis,
    base: SpectralDecomposition,
    neighbor_radius: float = DEFAULT_NEIGHBOR_RADIUS,
    neighbor_count: int = DEFAULT_NEIGHBOR_COUNT,
    epsilon: float = DEFAULT_FD_EPSILON,
    seed: int = 0,
    floor: float = SIS_FLOOR,
) -> NeighborhoodAnalysis:
    """Shared neighbor sweep feeding both LC and the coupling profile.

    For each seeded neighbor z' the full probe (fd_jacobian -> metric ->
    eigendecompose) runs with the same basis W. The rotation term aligns the
    neighbor principal axis by the sign of its dot with the base axis; the
    couplings take absolute cosines, so both descriptors are invariant to any
    global eigenvector sign flip. Degenerate spectra (at the base point or at
    any neighbor) do not abort the computation, they only set the flag.
    """
    if neighbor_count < 1:
        raise ContractError("neighbor_count must be >= 1")
    if neighbor_radius <= 0 or floor <= 0:
        raise ContractError("neighbor_radius and floor must be positive")
    zv = as_latent(z, basis.latent_dim)
    v1 = base.principal
    p = basis.subspace_dim
    degenerate = _is_degenerate(base)
    rotation_terms = []
    abs_cos = np.zeros(p)
    for zp in _neighbor_points(zv, neighbor_radius, neighbor_count, seed):
        decomp = eigendecompose(metric_tensor(fd_jacobian(generator, zp, basis, epsilon)))
        degenerate = degenerate or _is_degenerate(decomp)
        v1p = decomp.principal
        dot = float(v1 @ v1p)
        sign = 1.0 if dot >= 0 else -1.0
        dist = float(np.linalg.norm(zv - zp))
        rotation_terms.append(np.linalg.norm(v1 - sign * v1p) / dist)
        abs_cos += np.abs(v1 @ decomp.eigenvectors)
    abs_cos /= neighbor_count
    secondary = abs_cos[1:]
    sis = float(abs_cos[0] / (secondary.sum() + floor))
    profile = CouplingProfile(similarities=secondary, sis=sis, degenerate=degenerate)
    return NeighborhoodAnalysis(
        lc=float(np.mean(rotation_terms)), profile=profile, degenerate=degenerate
    )


def local_complexity(
    generator,
    z,
    basis: SubspaceBasis,
    base: SpectralDecomposition,
    neighbor_radius: float = DEFAULT_NEIGHBOR_RADIUS,
    neighbor_count: int = DEFAULT_NEIGHBOR_COUNT,
    epsilon: float = DEFAULT_FD_EPSILON,
    seed: int = 0,
) -> LocalComplexityResult:
    """Mean sign-aligned rotation rate of the principal axis over K neighbors."""
    analysis = neighborhood_analysis(
        generator, z, basis, base, neighbor_radius, neighbor_count, epsilon, seed
    )
    return LocalComplexityResult(value=analysis.lc, degenerate=analysis.degenerate)


def spectral_isolation(
    generator,
    z,
    basis: SubspaceBasis,
    base: SpectralDecomposition,
    neighbor_radius: float = DEFAULT_NEIGHBOR_RADIUS,
    neighbor_count: int = DEFAULT_NEIGHBOR_COUNT,
    epsilon: float = DEFAULT_FD_EPSILON,
    seed: int = 0,
    floor: float = SIS_FLOOR,
) -> CouplingProfile:
    """Coupling profile of the base principal axis against neighbor eigenbases."""
    analysis = neighborhood_analysis(
        generator, z, basis, base, neighbor_radius, neighbor_count, epsilon, seed, floor
    )
    return analysis.profile


def dimensional_coupling_ratio(profile_normal: CouplingProfile, profile_ood: CouplingProfile) -> np.ndarray:
    """Per-axis relative loss of secondary coupling: 1 - sim_ood / sim_normal.

    Entries where the normal similarity is not strictly positive are
    undefined and returned as NaN sentinels.
    """
    a = np.asarray(profile_normal.similarities, dtype=float)
    b = np.asarray(profile_ood.similarities, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatchError(
            f"profile lengths differ: {a.shape} vs {b.shape}"
        )
    out = np.full(a.shape, np.nan)
    valid = a > 0
    out[valid] = 1.0 - b[valid] / a[valid]
    return out


def explained_variance(d: SpectralDecomposition, k: int) -> float:
    """Cumulative eigenvalue ratio of the top-k modes.

    Negative rounding-noise eigenvalues clamp to zero before summation.
    """
    lam = np.clip(np.asarray(d.eigenvalues, dtype=float), 0.0, None)
    if not 1 <= k <= lam.size:
        raise ContractError(f"k must lie in [1, {lam.size}], got {k}")
    total = lam.sum()
    if total <= 0:
        from .errors import UndefinedStatisticError

        raise UndefinedStatisticError("all-zero spectrum has no variance ratio")
    return float(lam[:k].sum() / total)


def paired_axis_similarity(v_a, v_b) -> float:
    """Sign-invariant |cosine| between two unit vectors."""
    a = np.asarray(v_a, dtype=float).ravel()
    b = np.asarray(v_b, dtype=float).ravel()
    if a.shape != b.shape:
        raise DimensionMismatchError(f"vector lengths differ: {a.size} vs {b.size}")
    for name, v in (("v_a", a), ("v_b", b)):
        if abs(np.linalg.norm(v) - 1.0) > 1e-8:
            raise ContractError(f"{name} is not unit-norm within 1e-8")
    return float(min(abs(a @ b), 1.0))


@dataclass
class GeometricRecord:
    """Per-sample bundle of every pointwise descriptor.

    Serializes to one JSON object per line with fixed field names. ``flags``
    carries data-quality markers ("degenerate_spectrum", "ls_underflow").
    ``topk_hf`` holds the image-space top-k high-frequency shares keyed by
    percentage, which the hf-transfer summary consumes.
    """

    seed: int
    condition: str
    ls: float
    lc: float
    phfe: float
    hfe: float
    sis: float
    coupling: list[float] = field(default_factory=list)
    topk_hf: dict[str, float] = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)

    def validate(self) -> None:
        if self.lc < 0 or self.phfe < 0 or self.hfe < 0:
            raise ContractError("lc, phfe and hfe must be nonnegative")
        if self.sis < 0:
            raise ContractError("sis must be nonnegative")
        for s in self.coupling:
            if not 0.0 <= s <= 1.0:
                raise ContractError(f"coupling similarity {s} outside [0, 1]")
        if self.ls == float("-inf") and "ls_underflow" not in self.flags:
            raise ContractError("ls underflow sentinel must be flagged")

    def to_json_line(self) -> str:
        payload = {
            "seed": self.seed,
            "condition": self.condition,
            "ls": self.ls,
            "lc": self.lc,
            "phfe": self.phfe,
            "hfe": self.hfe,
            "sis": self.sis,
            "coupling": list(self.coupling),
            "topk_hf": self.topk_hf,
            "flags": list(self.flags),
        }
        return json.dumps(payload)

    @classmethod
    def from_json(cls, payload: dict) -> "GeometricRecord":
        return cls(
            seed=int(payload["seed"]),
            condition=str(payload["condition"]),
            ls=float(payload["ls"]),
            lc=float(payload["lc"]),
            phfe=float(payload["phfe"]),
            hfe=float(payload["hfe"]),
            sis=float(payload["sis"]),
            coupling=[float(v) for v in payload.get("coupling", [])],
            topk_hf={str(k): float(v) for k, v in payload.get("topk_hf", {}).items()},
            flags=[str(f) for f in payload.get("flags", [])],
        )

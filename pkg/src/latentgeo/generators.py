"""Pluggable generator abstraction and analytic built-in generators.

Built-ins carry closed-form Jacobians and act as oracles for the
finite-difference probe. The coupled/decoupled families instantiate, per
seed, generators whose ground-truth curvature knob provably does (coupled)
or does not (decoupled) drive high-frequency content in the principal
projection, so correlation and detection claims can be verified at desk
scale. Sampler-style built-ins (identity/contraction/curl) map latents to
latents and stand in for a conditioned sampling process in trajectory runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionMismatchError
from .geometry import as_latent


@dataclass
class GeneratorDescriptor:
    latent_dim: int
    output_shape: tuple[int, int, int]
    concurrent_safe: bool
    name: str

    @property
    def output_size(self) -> int:
        c, h, w = self.output_shape
        return c * h * w


class Generator:
    """A deterministic map from latent vectors to C x H x W tensors."""

    def __init__(self, descriptor: GeneratorDescriptor):
        self.descriptor = descriptor

    def evaluate(self, z) -> np.ndarray:
        raise NotImplementedError

    def _latent(self, z) -> np.ndarray:
        return as_latent(z, self.descriptor.latent_dim)


class AnalyticGenerator(Generator):
    """A generator with a closed-form Jacobian evaluator (test oracle)."""

    def analytic_jacobian(self, z) -> np.ndarray:
        """Exact D_output x E Jacobian of the forward map at z."""
        raise NotImplementedError


def _vector_descriptor(latent_dim: int, out_dim: int, name: str) -> GeneratorDescriptor:
    return GeneratorDescriptor(
        latent_dim=latent_dim,
        output_shape=(1, 1, out_dim),
        concurrent_safe=True,
        name=name,
    )


class LinearGenerator(AnalyticGenerator):
    def __init__(self, matrix: np.ndarray, name: str = "linear"):
        self.matrix = np.asarray(matrix, dtype=float)
        if self.matrix.ndim != 2:
            raise ConfigError("linear generator needs a 2-D matrix")
        super().__init__(
            _vector_descriptor(self.matrix.shape[1], self.matrix.shape[0], name)
        )

    def evaluate(self, z):
        return (self.matrix @ self._latent(z)).reshape(self.descriptor.output_shape)

    def analytic_jacobian(self, z):
        return self.matrix.copy()


class SaddleGenerator(AnalyticGenerator):
    """G(z) = scale * (z1^2, z2, ..., zE); the first coordinate is quadratic."""

    def __init__(self, latent_dim: int = 2, scale: float = 1.0):
        self.scale = float(scale)
        super().__init__(_vector_descriptor(latent_dim, latent_dim, "saddle"))

    def evaluate(self, z):
        zv = self._latent(z)
        out = zv.copy()
        out[0] = zv[0] ** 2
        return (self.scale * out).reshape(self.descriptor.output_shape)

    def analytic_jacobian(self, z):
        zv = self._latent(z)
        diag = np.ones(zv.size)
        diag[0] = 2.0 * zv[0]
        return self.scale * np.diag(diag)


class SphereGenerator(AnalyticGenerator):
    """Radial projection onto the sphere of the given radius: G(z) = r * z / |z|."""

    def __init__(self, latent_dim: int = 2, radius: float = 1.0):
        self.radius = float(radius)
        super().__init__(_vector_descriptor(latent_dim, latent_dim, "sphere"))

    def evaluate(self, z):
        zv = self._latent(z)
        norm = np.linalg.norm(zv)
        if norm == 0:
            raise DimensionMismatchError("sphere generator undefined at the origin")
        return (self.radius * zv / norm).reshape(self.descriptor.output_shape)

    def analytic_jacobian(self, z):
        zv = self._latent(z)
        norm = np.linalg.norm(zv)
        unit = zv / norm
        return self.radius / norm * (np.eye(zv.size) - np.outer(unit, unit))


class RandomFeatureGenerator(AnalyticGenerator):
    """G(z) = B tanh(A z) with seeded Gaussian weight matrices."""

    def __init__(self, latent_dim: int = 4, hidden: int = 16,
                 output_shape: tuple[int, int, int] = (1, 4, 4), seed: int = 0):
        shape = tuple(int(v) for v in output_shape)
        out_dim = int(np.prod(shape))
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, 11))))
        self.a = rng.standard_normal((hidden, latent_dim)) / np.sqrt(latent_dim)
        self.b = rng.standard_normal((out_dim, hidden)) / np.sqrt(hidden)
        super().__init__(
            GeneratorDescriptor(latent_dim, shape, True, "random_feature")
        )

    def evaluate(self, z):
        hidden = np.tanh(self.a @ self._latent(z))
        return (self.b @ hidden).reshape(self.descriptor.output_shape)

    def analytic_jacobian(self, z):
        act = np.tanh(self.a @ self._latent(z))
        return self.b @ ((1.0 - act**2)[:, None] * self.a)


class ContractionSampler(AnalyticGenerator):
    """Latent-to-latent condition h(z) = factor * z."""

    def __init__(self, latent_dim: int = 2, factor: float = 0.5):
        self.factor = float(factor)
        super().__init__(_vector_descriptor(latent_dim, latent_dim, "contraction_sampler"))

    def evaluate(self, z):
        return (self.factor * self._latent(z)).reshape(self.descriptor.output_shape)

    def analytic_jacobian(self, z):
        return self.factor * np.eye(self.descriptor.latent_dim)


class CurlSampler(AnalyticGenerator):
    """Latent-to-latent condition rotating the first two coordinates.

    The rotation angle grows with the norm of z (theta = swirl * |z|), which
    warps straight noise-space interpolations into longer induced paths.
    """

    def __init__(self, latent_dim: int = 2, swirl: float = 1.5):
        if latent_dim < 2:
            raise ConfigError("curl sampler needs latent_dim >= 2")
        self.swirl = float(swirl)
        super().__init__(_vector_descriptor(latent_dim, latent_dim, "curl_sampler"))

    def evaluate(self, z):
        zv = self._latent(z)
        theta = self.swirl * np.linalg.norm(zv)
        c, s = np.cos(theta), np.sin(theta)
        out = zv.copy()
        out[0] = c * zv[0] - s * zv[1]
        out[1] = s * zv[0] + c * zv[1]
        return out.reshape(self.descriptor.output_shape)

    def analytic_jacobian(self, z):
        zv = self._latent(z)
        e = zv.size
        r = np.linalg.norm(zv)
        jac = np.eye(e)
        if r == 0:
            return jac
        theta = self.swirl * r
        c, s = np.cos(theta), np.sin(theta)
        jac[0, 0], jac[0, 1] = c, -s
        jac[1, 0], jac[1, 1] = s, c
        dtheta = self.swirl * zv / r
        jac[0, :] += (-s * zv[0] - c * zv[1]) * dtheta
        jac[1, :] += (c * zv[0] - s * zv[1]) * dtheta
        return jac


# Family construction: each member combines four orthonormal image directions.
# Three are per-channel constants (exactly Laplacian-null under replicate
# padding), the fourth is a checkerboard carrying all high-frequency content.
# The knob drives both the principal-axis rotation rate (via the z2-shear in
# the first component) and, in the coupled family only, the checker loading.
_FAMILY_SIG = (2.0, 0.8, 0.5)
_FAMILY_BETA = 0.03
_FAMILY_GAMMA = 0.003
_FAMILY_KNOB_RANGE = (2.0, 10.0)
_FAMILY_AMP_RANGE = (0.5, 1.5)
_FAMILY_GAIN_RANGE = (0.6, 1.6)
_KNOB_STREAM = 101
_AMP_STREAM = 404
_GAIN_STREAM = 707


def _stream_uniform(seed: int, stream: int, low: float, high: float) -> float:
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, stream))))
    return float(rng.uniform(low, high))


class FamilyGenerator(AnalyticGenerator):
    """One member of the coupled or decoupled synthetic family (E = 3)."""

    def __init__(self, seed: int, coupled: bool, image_size: int = 8):
        h = w = int(image_size)
        self.curvature_knob = _stream_uniform(seed, _KNOB_STREAM, *_FAMILY_KNOB_RANGE)
        self.gain = _stream_uniform(seed, _GAIN_STREAM, *_FAMILY_GAIN_RANGE)
        if coupled:
            self.checker_amp = self.curvature_knob
        else:
            self.checker_amp = _stream_uniform(seed, _AMP_STREAM, *_FAMILY_AMP_RANGE)
        self.member_seed = seed
        norm = 1.0 / np.sqrt(h * w)
        checker = ((-1.0) ** np.add.outer(np.arange(h), np.arange(w))) * norm
        basis = np.zeros((4, 4, h, w))
        for c in range(3):
            basis[c, c] = norm
        basis[3, 3] = checker
        self._basis = basis
        self._basis_flat = basis.reshape(4, -1)
        kind = "coupled_family" if coupled else "decoupled_family"
        super().__init__(
            GeneratorDescriptor(3, (4, h, w), True, f"{kind}[{seed}]")
        )

    def _gradients(self, z: np.ndarray) -> np.ndarray:
        s1, s2, s3 = _FAMILY_SIG
        return np.array(
            [
                [s1, _FAMILY_BETA * self.curvature_knob * z[1], 0.0],
                [0.0, s2 * self.gain, 0.0],
                [0.0, 0.0, s3],
                [_FAMILY_GAMMA * self.checker_amp, 0.0, 0.0],
            ]
        )

    def _components(self, z: np.ndarray) -> np.ndarray:
        s1, s2, s3 = _FAMILY_SIG
        return np.array(
            [
                s1 * z[0] + 0.5 * _FAMILY_BETA * self.curvature_knob * z[1] ** 2,
                s2 * self.gain * z[1],
                s3 * z[2],
                _FAMILY_GAMMA * self.checker_amp * z[0],
            ]
        )

    def evaluate(self, z):
        zv = self._latent(z)
        return np.tensordot(self._components(zv), self._basis, axes=1)

    def analytic_jacobian(self, z):
        zv = self._latent(z)
        return self._basis_flat.T @ self._gradients(zv)


FAMILY_KINDS = ("coupled_family", "decoupled_family")

BUILTIN_KINDS = (
    "linear",
    "saddle",
    "sphere",
    "random_feature",
    "coupled_family",
    "decoupled_family",
    "curl_sampler",
    "contraction_sampler",
)


def make_builtin(kind: str, params: dict | None = None, seed: int = 0) -> AnalyticGenerator:
    """Construct a deterministic built-in generator.

    ``seed`` selects the member for family kinds and the weights for the
    random-feature generator; the remaining kinds ignore it.
    """
    params = dict(params or {})
    try:
        if kind == "linear":
            if "matrix" in params:
                return LinearGenerator(np.asarray(params["matrix"], dtype=float))
            dim = int(params.get("latent_dim", 2))
            scale = float(params.get("scale", 1.0))
            return LinearGenerator(scale * np.eye(dim))
        if kind == "saddle":
            return SaddleGenerator(
                latent_dim=int(params.get("latent_dim", 2)),
                scale=float(params.get("scale", 1.0)),
            )
        if kind == "sphere":
            return SphereGenerator(
                latent_dim=int(params.get("latent_dim", 2)),
                radius=float(params.get("radius", 1.0)),
            )
        if kind == "random_feature":
            return RandomFeatureGenerator(
                latent_dim=int(params.get("latent_dim", 4)),
                hidden=int(params.get("hidden", 16)),
                output_shape=tuple(params.get("output_shape", (1, 4, 4))),
                seed=seed,
            )
        if kind == "coupled_family":
            return FamilyGenerator(seed, coupled=True, image_size=int(params.get("image_size", 8)))
        if kind == "decoupled_family":
            return FamilyGenerator(seed, coupled=False, image_size=int(params.get("image_size", 8)))
        if kind == "curl_sampler":
            return CurlSampler(
                latent_dim=int(params.get("latent_dim", 2)),
                swirl=float(params.get("swirl", 1.5)),
            )
        if kind == "contraction_sampler":
            return ContractionSampler(
                latent_dim=int(params.get("latent_dim", 2)),
                factor=float(params.get("factor", 0.5)),
            )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid params for builtin {kind!r}: {exc}") from exc
    raise ConfigError(f"unknown builtin kind {kind!r}; expected one of {BUILTIN_KINDS}")

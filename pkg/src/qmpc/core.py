"""Shared numeric types, reproducible random streams, and planner parameters.

State, action, and observation vectors are plain float64 ``numpy`` arrays
throughout the package; the dataclasses here carry the structured values
(control policies, planner parameters) that every other module shares.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np


def _as_readonly(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=np.float64)
    out.flags.writeable = False
    return out


class RngStream:
    """Counter-based random stream with named, independent substreams.

    The generator state is a pure function of ``(seed, path)``, where the
    path is the sequence of substream labels used to derive this stream.
    Two streams with the same seed and path produce identical draws no
    matter what any sibling stream consumed, so substreams can be handed
    to parallel workers without losing reproducibility. A single stream
    must not be advanced from two threads at once.
    """

    def __init__(self, seed: int, _path: tuple[str, ...] = ()):
        if not isinstance(seed, (int, np.integer)):
            raise TypeError(f"seed must be an integer, got {type(seed).__name__}")
        self.seed = int(seed)
        self.path = _path
        digest = hashlib.blake2b(digest_size=16)
        digest.update(self.seed.to_bytes(8, "little", signed=True))
        for label in _path:
            digest.update(b"/")
            digest.update(label.encode("utf-8"))
        key = int.from_bytes(digest.digest(), "little")
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def substream(self, label: str) -> "RngStream":
        """Derive an independent stream identified by ``label``."""
        return RngStream(self.seed, self.path + (label,))

    def normal(self, size=None) -> np.ndarray:
        return self._gen.standard_normal(size=size)

    def uniform(self, low: float, high: float, size=None):
        return self._gen.uniform(low, high, size=size)

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size=size)

    def choice_without_replacement(self, n: int, k: int) -> np.ndarray:
        """k distinct indices drawn uniformly from range(n)."""
        if k > n:
            raise ValueError(f"cannot draw {k} distinct indices from {n}")
        return self._gen.choice(n, size=k, replace=False)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, path={'/'.join(self.path) or '.'})"


@dataclass(frozen=True)
class GaussianControlPolicy:
    """Open-loop Gaussian policy: per-step mean controls with a shared
    diagonal covariance (variances, constant across the horizon)."""

    means: np.ndarray     # (horizon, action_dim)
    cov_diag: np.ndarray  # (action_dim,) variances

    def __post_init__(self):
        means = _as_readonly(np.atleast_2d(self.means))
        cov = _as_readonly(np.atleast_1d(self.cov_diag))
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "cov_diag", cov)
        if means.ndim != 2 or means.shape[0] < 1:
            raise ValueError(f"means must be (horizon, action_dim) with horizon >= 1, got {means.shape}")
        if not np.isfinite(means).all():
            raise ValueError("policy means contain non-finite entries")
        if cov.shape != (means.shape[1],):
            raise ValueError(f"cov_diag shape {cov.shape} does not match action dim {means.shape[1]}")
        if not (np.isfinite(cov).all() and (cov > 0.0).all()):
            raise ValueError("covariance diagonal must be finite and strictly positive")

    @property
    def horizon(self) -> int:
        return self.means.shape[0]

    @property
    def action_dim(self) -> int:
        return self.means.shape[1]

    def with_means(self, means: np.ndarray) -> "GaussianControlPolicy":
        return GaussianControlPolicy(means, self.cov_diag)


def zero_policy(horizon: int, action_dim: int, cov_diag) -> GaussianControlPolicy:
    """Zero-mean policy: the sampling prior of the optimizer."""
    cov = np.broadcast_to(np.asarray(cov_diag, dtype=np.float64), (action_dim,))
    return GaussianControlPolicy(np.zeros((horizon, action_dim)), cov)


@dataclass(frozen=True)
class MPPIParams:
    """Parameters of the sampling-based planner.

    ``sigma`` is the exploration covariance diagonal, read as a variance
    (scalar broadcasts over action dimensions). ``step_size`` blends the
    weighted noise into the mean update; ``iterations`` is the number of
    sample/reweight/update rounds per optimization call.
    """

    horizon: int
    samples: int
    temperature: float
    step_size: float
    discount: float
    sigma: float | tuple[float, ...] = 1.0
    iterations: int = 1

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        if self.samples < 1:
            raise ValueError(f"samples must be >= 1, got {self.samples}")
        if not self.temperature > 0.0:
            raise ValueError(f"temperature must be > 0, got {self.temperature}")
        if not 0.0 < self.step_size <= 1.0:
            raise ValueError(f"step_size must be in (0, 1], got {self.step_size}")
        if not 0.0 < self.discount <= 1.0:
            raise ValueError(f"discount must be in (0, 1], got {self.discount}")
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        diag = np.atleast_1d(np.asarray(self.sigma, dtype=np.float64))
        if not (np.isfinite(diag).all() and (diag > 0.0).all()):
            raise ValueError("sigma entries must be finite and strictly positive")

    def cov_diag(self, action_dim: int) -> np.ndarray:
        return np.broadcast_to(np.atleast_1d(np.asarray(self.sigma, dtype=np.float64)), (action_dim,)).copy()

    def initial_policy(self, action_dim: int) -> GaussianControlPolicy:
        return zero_policy(self.horizon, action_dim, self.cov_diag(action_dim))


def sample_gaussian_noise(policy: GaussianControlPolicy, n: int, rng: RngStream) -> np.ndarray:
    """Draw ``n`` zero-mean control perturbation sequences, shape
    ``(n, horizon, action_dim)``, i.i.d. per step with the policy's
    diagonal covariance."""
    if n < 1:
        raise ValueError(f"sample count must be >= 1, got {n}")
    std = np.sqrt(policy.cov_diag)
    return rng.normal(size=(n, policy.horizon, policy.action_dim)) * std


def ensure_finite(arr: np.ndarray, what: str) -> np.ndarray:
    arr = np.asarray(arr, dtype=np.float64)
    if not np.isfinite(arr).all():
        raise ValueError(f"{what} contains non-finite values")
    return arr

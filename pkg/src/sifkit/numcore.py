"""Dense-tensor helpers, a portable seeded RNG, and small numeric kernels.

Tensors are plain float64 numpy arrays throughout the package. The RNG is
splitmix64, chosen because its output sequence is fully specified by the
seed and reproduces bit-for-bit on any platform.
"""

from __future__ import annotations

import math

import numpy as np

_MASK64 = (1 << 64) - 1

ZERO_NORM_EPS = 1e-12


def as_tensor(values) -> np.ndarray:
    """Coerce to a float64 array (copying only when needed)."""
    return np.asarray(values, dtype=np.float64)


def require_finite(t: np.ndarray, what: str = "tensor") -> np.ndarray:
    if not np.all(np.isfinite(t)):
        raise ValueError(f"non-finite values in {what}")
    return t


class Rng:
    """splitmix64 counter-based generator.

    State transition: state += 0x9E3779B97F4A7C15, then two xor-shift-multiply
    mixes (0xBF58476D1CE4E5B9, 0x94D049BB133111EB) and a final xor-shift.
    Identical seeds give identical sequences everywhere.
    """

    __slots__ = ("seed", "state")

    def __init__(self, seed: int):
        self.seed = seed & _MASK64
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def next_uniform(self) -> float:
        """Uniform draw in [0, 1)."""
        return self.next_u64() / 2.0**64

    def next_below(self, n: int) -> int:
        """Integer in [0, n)."""
        if n <= 0:
            raise ValueError("n must be positive")
        return min(int(self.next_uniform() * n), n - 1)

    def choose_weighted(self, weights) -> int:
        """Index drawn with probability proportional to its weight.

        Cumulative-sum inversion of a single uniform draw. Raises on an
        all-zero (degenerate) weight vector.
        """
        w = np.asarray(weights, dtype=np.float64)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a nonempty 1-D sequence")
        if np.any(w < 0):
            raise ValueError("negative weight")
        total = float(w.sum())
        if total <= 0.0:
            raise ValueError("degenerate distribution")
        r = self.next_uniform() * total
        acc = 0.0
        for i, wi in enumerate(w):
            acc += float(wi)
            if r < acc:
                return i
        return int(np.nonzero(w)[0][-1])  # r landed on accumulated rounding

    def normal(self) -> float:
        """Standard normal via Box-Muller."""
        u1 = self.next_uniform()
        while u1 <= 0.0:
            u1 = self.next_uniform()
        u2 = self.next_uniform()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def normal_vector(self, n: int) -> np.ndarray:
        return np.array([self.normal() for _ in range(n)], dtype=np.float64)

    def uniform_array(self, shape, low: float, high: float) -> np.ndarray:
        n = int(np.prod(shape))
        flat = np.array([self.next_uniform() for _ in range(n)], dtype=np.float64)
        return (low + (high - low) * flat).reshape(shape)

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates."""
        for i in range(len(items) - 1, 0, -1):
            j = self.next_below(i + 1)
            items[i], items[j] = items[j], items[i]


def rng_new(seed: int) -> Rng:
    return Rng(seed)


def l2_normalize(v: np.ndarray) -> np.ndarray:
    """Scale a rank-1 vector to unit L2 norm.

    Raises on (near-)zero vectors: a direction cannot be recovered below
    ZERO_NORM_EPS.
    """
    v = as_tensor(v)
    if v.ndim != 1:
        raise ValueError("expected a rank-1 tensor")
    norm = float(np.linalg.norm(v))
    if norm <= ZERO_NORM_EPS:
        raise ValueError("zero-norm vector")
    return v / norm


def softmax_cross_entropy(scores: np.ndarray, label: int) -> tuple[float, np.ndarray]:
    """Loss and gradient of -log softmax(scores)[label].

    Stabilized by max-subtraction. Scores of -inf are legal and get zero
    probability and zero gradient (used to mask out absent class rows);
    the label itself must have a finite score.
    """
    s = as_tensor(scores)
    if s.ndim != 1:
        raise ValueError("expected a rank-1 score vector")
    if not 0 <= label < s.size:
        raise ValueError("label out of range")
    if not np.isfinite(s[label]):
        raise ValueError("label has non-finite score")
    m = float(np.max(s[np.isfinite(s)]))
    exps = np.exp(s - m)  # exp(-inf) == 0, no warning
    z = float(exps.sum())
    probs = exps / z
    loss = -(float(s[label]) - m - math.log(z))
    grad = probs.copy()
    grad[label] -= 1.0
    return loss, grad

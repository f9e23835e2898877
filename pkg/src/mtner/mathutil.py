"""Dense-math utilities: stable reductions, parameter init, SGD, gradient checks.

Everything here works on float64 numpy arrays and is deterministic under a
fixed seed.
"""

from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

DEFAULT_CLIP_NORM = 5.0


def as_rng(seed_or_rng) -> np.random.Generator:
    """Accept an int seed, a seed sequence list, or an existing Generator."""
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


def logsumexp(values) -> float:
    """log(sum(exp(values))) with max-shift for stability.

    Raises ValueError on an empty reduction or non-finite input.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("empty reduction")
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite input to logsumexp")
    m = v.max()
    return float(m + np.log(np.sum(np.exp(v - m))))


def logsumexp_axis(a: np.ndarray, axis: int) -> np.ndarray:
    """Vectorized max-shifted logsumexp along one axis (no validity checks)."""
    m = a.max(axis=axis, keepdims=True)
    out = m.squeeze(axis) + np.log(np.sum(np.exp(a - m), axis=axis))
    return out


def xavier_init(rows: int, cols: int, seed_or_rng) -> np.ndarray:
    """Uniform init on [-sqrt(6/(rows+cols)), +sqrt(6/(rows+cols))]."""
    if rows < 1 or cols < 1:
        raise ValueError(f"xavier_init needs positive dims, got {rows}x{cols}")
    rng = as_rng(seed_or_rng)
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, size=(rows, cols)).astype(np.float64)


def clip_to_norm(grad: np.ndarray, max_norm: float) -> np.ndarray:
    """Scale grad down so its L2 norm is at most max_norm (no-op otherwise)."""
    norm = float(np.sqrt(np.sum(grad * grad)))
    if norm > max_norm:
        return grad * (max_norm / norm)
    return grad


def global_grad_norm(grads: Mapping[str, np.ndarray]) -> float:
    total = 0.0
    for g in grads.values():
        total += float(np.sum(g * g))
    return float(np.sqrt(total))


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Jointly rescale a whole gradient set to L2 norm <= max_norm, in place.

    Returns the pre-clip norm.
    """
    norm = global_grad_norm(grads)
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


def sgd_step(
    param: np.ndarray,
    grad: np.ndarray,
    lr: float,
    max_norm: float | None = DEFAULT_CLIP_NORM,
) -> np.ndarray:
    """One SGD update: param - lr * clip(grad). Returns a new array.

    max_norm=None skips clipping (used when the caller already clipped the
    full gradient set jointly).
    """
    if param.shape != grad.shape:
        raise ValueError(f"shape mismatch: param {param.shape} vs grad {grad.shape}")
    if lr <= 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    g = grad if max_norm is None else clip_to_norm(grad, max_norm)
    return param - lr * g


def grad_check(
    loss_fn: Callable[[Mapping[str, np.ndarray]], float],
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    epsilon=1e-5,
    noise_floor: float = 0.0,
) -> float:
    """Max relative error between analytic grads and central differences.

    loss_fn re-evaluates the loss from the current contents of `params`;
    entries are perturbed in place and restored. Relative error per
    coordinate is |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
    """
    per_block = grad_check_blocks(loss_fn, params, grads, epsilon, noise_floor)
    return max(per_block.values())


def grad_check_blocks(
    loss_fn: Callable[[Mapping[str, np.ndarray]], float],
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    epsilon=1e-5,
    noise_floor: float = 0.0,
) -> dict[str, float]:
    """Like grad_check but reports the max relative error per parameter block.

    epsilon may be a single step or a sequence of steps; with several, each
    coordinate keeps its best (smallest) error. Central-difference noise is
    step-dependent (truncation shrinks with epsilon, roundoff grows), so a
    coordinate clean at any step has a correct gradient, while an analytic
    error stays no matter the step.

    noise_floor > 0 skips coordinates where analytic and numeric values are
    BOTH below the floor: a float64 central difference of a loss of
    magnitude L resolves derivatives only down to about 1e-16 * L / epsilon,
    so below that scale the comparison measures rounding, not correctness.
    The floor must sit above that resolution limit for the losses at hand.
    """
    epsilons = (epsilon,) if np.isscalar(epsilon) else tuple(epsilon)
    for eps in epsilons:
        if not 1e-6 <= eps <= 1e-4:
            raise ValueError(f"epsilon must be in [1e-6, 1e-4], got {eps}")
    result: dict[str, float] = {}
    for name, p in params.items():
        analytic = grads[name]
        if analytic.shape != p.shape:
            raise ValueError(f"gradient shape mismatch for block {name!r}")
        worst = 0.0
        flat_p = p.reshape(-1)
        flat_a = analytic.reshape(-1)
        for idx in range(flat_p.size):
            orig = flat_p[idx]
            a = flat_a[idx]
            best = np.inf
            for eps in epsilons:
                flat_p[idx] = orig + eps
                up = loss_fn(params)
                flat_p[idx] = orig - eps
                down = loss_fn(params)
                flat_p[idx] = orig
                if not (np.isfinite(up) and np.isfinite(down)):
                    raise ValueError(f"non-finite loss while checking block {name!r}")
                numeric = (up - down) / (2.0 * eps)
                if abs(a) < noise_floor and abs(numeric) < noise_floor:
                    best = 0.0
                    break
                rel = abs(a - numeric) / max(1e-8, abs(a) + abs(numeric))
                if rel < best:
                    best = rel
                if best < 1e-7:
                    break
            if best > worst:
                worst = best
        result[name] = worst
    return result

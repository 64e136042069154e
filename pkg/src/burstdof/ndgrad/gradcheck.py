"""Finite-difference verification of tape gradients.

grad_check compares the tape gradient of a scalar-valued function against
central differences per coordinate. The suite below exercises every
differentiable op on randomized small inputs kept away from kinks
(leaky_relu at 0, |x| at 0), where central differences would straddle the
non-smooth point.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import engine, imageops
from .engine import Tape, Tensor


def grad_check(f: Callable[[Tensor], Tensor], x: np.ndarray, h: float = 1e-3) -> float:
    """Max relative error between the tape gradient of f at x and central
    finite differences.

    f must map a Tensor to a scalar Tensor. Relative error per coordinate
    is |tape - fd| / max(|tape|, |fd|, 1), appropriate for the unit-scale
    functions used here.
    """
    x = Tensor(np.array(x, dtype=np.float64), requires_grad=True)
    with Tape() as tape:
        out = f(x)
    if out.data.ndim != 0:
        raise ValueError(f"grad_check: f must return a scalar, got shape {out.data.shape}")
    tape.backward(out)
    g = x.grad.copy()

    probe = Tensor(x.data)  # same buffer, no grad tracking
    flat = probe.data.reshape(-1)
    fd = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        f_plus = float(f(probe).data)
        flat[i] = orig - h
        f_minus = float(f(probe).data)
        flat[i] = orig
        fd[i] = (f_plus - f_minus) / (2.0 * h)
    fd = fd.reshape(x.data.shape)

    denom = np.maximum(np.maximum(np.abs(g), np.abs(fd)), 1.0)
    return float((np.abs(g - fd) / denom).max())


@dataclass
class OpCheckResult:
    op: str
    seeds: int
    max_rel_err: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tolerance


def _away_from_zero(x: np.ndarray, margin: float) -> np.ndarray:
    return np.sign(x) * (np.abs(x) + margin)


def _project(rng: np.random.Generator, shape) -> np.ndarray:
    # fixed random readout making a scalar objective with non-trivial grads
    return rng.normal(size=shape)


def gradient_suite(n_seeds: int = 100, tol: float = 1e-6) -> list[OpCheckResult]:
    """Run finite-difference checks for every differentiable op."""
    results = []

    def check(op_name, make_case, tolerance=tol):
        worst = 0.0
        for seed in range(n_seeds):
            rng = np.random.default_rng(1000 + seed)
            f, x = make_case(rng)
            worst = max(worst, grad_check(f, x))
        results.append(OpCheckResult(op_name, n_seeds, worst, tolerance))

    def conv_case_input(rng):
        x = rng.normal(size=(1, 2, 6, 6)) * 0.5
        k = Tensor(rng.normal(size=(3, 2, 3, 3)) * 0.5)
        r = _project(rng, (1, 3, 6, 6))
        return (lambda t: engine.mean_all(engine.mul(imageops.conv2d(t, k, 1, 1), r))), x

    def conv_case_kernel(rng):
        x = Tensor(rng.normal(size=(1, 2, 6, 6)) * 0.5)
        k = rng.normal(size=(3, 2, 3, 3)) * 0.5
        r = _project(rng, (1, 3, 6, 6))
        return (lambda t: engine.mean_all(engine.mul(imageops.conv2d(x, t, 1, 1), r))), k

    def down_case(rng):
        x = rng.normal(size=(1, 2, 6, 6))
        r = _project(rng, (1, 2, 3, 3))
        return (lambda t: engine.mean_all(engine.mul(imageops.downsample2(t), r))), x

    def up_case(rng):
        x = rng.normal(size=(1, 2, 5, 5))
        r = _project(rng, (1, 2, 10, 10))
        return (lambda t: engine.mean_all(engine.mul(imageops.upsample2(t), r))), x

    def leaky_case(rng):
        x = _away_from_zero(rng.normal(size=(4, 5)), 0.05)
        r = _project(rng, (4, 5))
        return (lambda t: engine.mean_all(engine.mul(engine.leaky_relu(t), r))), x

    def sigmoid_case(rng):
        x = rng.normal(size=(4, 5))
        r = _project(rng, (4, 5))
        return (lambda t: engine.mean_all(engine.mul(engine.sigmoid(t), r))), x

    def softmax_case(rng):
        x = rng.normal(size=(2, 3, 4))
        r = _project(rng, (2, 3, 4))
        return (lambda t: engine.mean_all(engine.mul(engine.softmax(t, 1), r))), x

    def concat_case(rng):
        x = rng.normal(size=(3, 2))
        b = Tensor(rng.normal(size=(3, 4)))
        r = _project(rng, (3, 6))
        return (lambda t: engine.mean_all(engine.mul(engine.concat(t, b, 1), r))), x

    def bias_case(rng):
        b = rng.normal(size=(3,))
        x = Tensor(rng.normal(size=(1, 3, 4, 4)))
        r = _project(rng, (1, 3, 4, 4))
        return (lambda t: engine.mean_all(engine.mul(engine.add_bias(x, t), r))), b

    def l1_case(rng):
        a = rng.normal(size=(4, 4))
        diff = _away_from_zero(rng.normal(size=(4, 4)), 0.05)
        b = Tensor(a - diff)
        return (lambda t: engine.l1_loss(t, b)), a

    def ms_ssim_case(rng):
        a = rng.uniform(0.1, 0.9, size=(1, 1, 14, 14))
        b = Tensor(np.clip(a + rng.normal(size=a.shape) * 0.1, 0.0, 1.0))
        return (lambda t: imageops.ms_ssim(t, b)), a

    check("conv2d/input", conv_case_input)
    check("conv2d/kernel", conv_case_kernel)
    check("downsample2", down_case)
    check("upsample2", up_case)
    check("leaky_relu", leaky_case)
    check("sigmoid", sigmoid_case)
    check("softmax", softmax_case)
    check("concat", concat_case)
    check("add_bias", bias_case)
    check("l1_loss", l1_case)
    check("ms_ssim", ms_ssim_case)
    return results

"""Stochastic bipolar quantisation with a pass-through gradient.

A value ``vh`` in [-1, 1] becomes +1 with probability (1 + vh) / 2 and -1
otherwise, so the quantisation noise ``v - vh`` has zero mean and the sampled
message is an unbiased estimate of ``vh``. The backward pass therefore treats
the layer as the identity on ``vh``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

RANGE_SLACK = 1e-12


@dataclass
class BinarizerOutput:
    v: np.ndarray
    v_hat: np.ndarray
    q: np.ndarray


def _checked(v_hat) -> np.ndarray:
    v_hat = np.asarray(v_hat, dtype=np.float64)
    if np.any(np.abs(v_hat) > 1.0 + RANGE_SLACK):
        raise ValueError("binarize: inputs must lie in [-1, 1]")
    return np.clip(v_hat, -1.0, 1.0)


def plus_probability(v_hat) -> np.ndarray:
    return (1.0 + np.asarray(v_hat)) / 2.0


def binarize_forward(v_hat, rng: np.random.Generator) -> BinarizerOutput:
    vh = _checked(v_hat)
    v = np.where(rng.random(vh.shape) < plus_probability(vh), 1.0, -1.0)
    # q is the rounded difference v - vh; v_hat + q recovers v to within one ulp
    return BinarizerOutput(v=v, v_hat=vh, q=v - vh)


def binarize_backward(upstream_grad) -> np.ndarray:
    return np.asarray(upstream_grad, dtype=np.float64)


def binarize_eval(v_hat) -> np.ndarray:
    """Deterministic quantiser: sign with sign(0) = +1."""
    vh = _checked(v_hat)
    return np.where(vh >= 0.0, 1.0, -1.0)


class StochasticBinarizer:
    """Graph op wrapper owning its own RNG stream.

    ``mode="train"`` samples; ``mode="eval"`` uses :func:`binarize_eval`.
    Either way the adjoint is passed to ``v_hat`` unchanged.
    """

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.last: BinarizerOutput | None = None

    def __call__(self, v_hat: Tensor, mode: str = "train") -> Tensor:
        v_hat = ad.as_tensor(v_hat)
        if mode == "train":
            self.last = binarize_forward(v_hat.data, self.rng)
            v = self.last.v
        elif mode == "eval":
            v = binarize_eval(v_hat.data)
            vh = np.clip(v_hat.data, -1.0, 1.0)
            self.last = BinarizerOutput(v=v, v_hat=vh, q=v - vh)
        else:
            raise ValueError(f"unknown mode {mode!r}")
        return ad._make(v, (v_hat,), lambda g: ((v_hat, binarize_backward(g)),), "binarize")

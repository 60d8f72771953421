"""Laplace noise on quantized updates and the membership-guess ceiling."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from verifbfl.errors import InvalidBudget
from verifbfl.fl.model import QuantizedModel


@dataclass(frozen=True)
class DpParams:
    epsilon: float
    clip: float

    def __post_init__(self):
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise InvalidBudget(f"epsilon must be positive, got {self.epsilon}")
        if not (self.clip > 0 and math.isfinite(self.clip)):
            raise InvalidBudget(f"clip must be positive, got {self.clip}")

    @property
    def noise_scale(self) -> float:
        return self.clip / self.epsilon


def laplace_samples(scale: float, size, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF Laplace(0, scale) draws."""
    u = rng.random(size) - 0.5
    # 1 - 2|u| lies in (0, 1]; u = -0.5 exactly has probability 2^-53
    return -scale * np.sign(u) * np.log1p(-2.0 * np.abs(u))


def clip_quantized(flat, clip_q: int) -> np.ndarray:
    return np.clip(np.asarray(flat, dtype=np.int64), -clip_q, clip_q)


def add_dp_noise(model: QuantizedModel, dp: DpParams, seed: int) -> QuantizedModel:
    """Clip every coordinate to [-clip, clip], add Laplace(clip/epsilon), re-round.

    Works on the integer representation so the noised model is exactly the
    one that gets proved and shared.
    """
    one = model.cfg.one
    clip_q = int(round(dp.clip * one))
    clipped = clip_quantized(model.flat(), clip_q)
    rng = np.random.default_rng([seed, 0xD9])
    noise = np.rint(laplace_samples(dp.noise_scale * one, clipped.shape, rng)).astype(np.int64)
    bound = model.cfg.bound - 1
    noised = np.clip(clipped + noise, -bound, bound)
    return QuantizedModel.from_flat(model.dims, noised.tolist(), model.cfg, round=model.round, owner=model.owner)


def inference_advantage_bound(epsilon: float) -> float:
    """Ceiling e^eps / (e^eps + 1) on a guesser's success probability."""
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    # evaluated as 1 / (1 + e^-eps): exact at eps = ln 3 and no overflow
    return 1.0 / (1.0 + math.exp(-epsilon))

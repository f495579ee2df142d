"""First-order optimizers over flat parameter vectors."""

from typing import Protocol

import numpy as np
import numpy.typing as npt

from .interface import OptimizerKind

FloatArray = npt.NDArray[np.float64]


class Optimizer(Protocol):
    step_size: float

    def step(self, params: FloatArray, grad: FloatArray) -> FloatArray: ...


class SGD:
    """Plain gradient descent: params - step_size * grad."""

    def __init__(self, step_size: float):
        self.step_size = step_size

    def step(self, params: FloatArray, grad: FloatArray) -> FloatArray:
        return params - self.step_size * grad


class Adam:
    """Adam with bias correction; moments persist across calls to `step`."""

    def __init__(
        self, step_size: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8
    ):
        self.step_size = step_size
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: FloatArray | None = None
        self.v: FloatArray | None = None

    def step(self, params: FloatArray, grad: FloatArray) -> FloatArray:
        if self.m is None or self.v is None or self.m.shape != grad.shape:
            self.m = np.zeros_like(grad)
            self.v = np.zeros_like(grad)
            self.t = 0
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        return params - self.step_size * m_hat / (np.sqrt(v_hat) + self.eps)


def make_optimizer(
    kind: OptimizerKind,
    step_size: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> Optimizer:
    if kind == "sgd":
        return SGD(step_size)
    if kind == "adam":
        return Adam(step_size, beta1=beta1, beta2=beta2, eps=eps)
    raise ValueError(f"unknown optimizer: {kind}")

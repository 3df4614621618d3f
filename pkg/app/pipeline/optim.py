from typing import Dict

import numpy as np

from app.config import training_defaults


class Adam:
    """Adaptive-moment optimizer with bias correction, one moment pair per parameter."""

    def __init__(
        self,
        params: Dict[str, np.ndarray],
        beta1: float = training_defaults.BETA1,
        beta2: float = training_defaults.BETA2,
        eps: float = training_defaults.ADAM_EPS,
    ):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {name: np.zeros_like(value) for name, value in params.items()}
        self.v = {name: np.zeros_like(value) for name, value in params.items()}

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray], lr: float) -> Dict[str, np.ndarray]:
        """Return updated copies of ``params``; a zero learning rate leaves them bit-identical."""
        self.step_count += 1
        correction1 = 1.0 - self.beta1**self.step_count
        correction2 = 1.0 - self.beta2**self.step_count
        updated = {}
        for name, value in params.items():
            g = grads[name]
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            if lr == 0.0:
                updated[name] = value.copy()
                continue
            m_hat = self.m[name] / correction1
            v_hat = self.v[name] / correction2
            updated[name] = (value - lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(value.dtype)
        return updated


def learning_rate_at(initial: float, step: int, decay_steps: int = 0, decay_factor: float = 1.0) -> float:
    """Step decay: initial * decay_factor ** floor(step / decay_steps); constant when decay_steps is 0."""
    if decay_steps <= 0:
        return initial
    return initial * decay_factor ** (step // decay_steps)

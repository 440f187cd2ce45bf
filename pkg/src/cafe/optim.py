"""Heavy-ball momentum SGD (no dampening, no weight decay)."""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInput, NumericalError


@dataclass
class MomentumState:
    lr: float = 1e-3
    momentum: float = 0.8
    velocity: list = field(default_factory=list)

    def __post_init__(self):
        if not 0.0 <= self.momentum < 1.0:
            raise InvalidInput(f"momentum must be in [0, 1), got {self.momentum}")


def sgd_momentum_step(params, grads, state):
    """In place: ``v <- momentum * v + g`` then ``p <- p - lr * v``.

    Velocities are created as zeros on the first call. A non-finite gradient
    aborts before anything is modified.

    >>> p = np.array([1.0])
    >>> _ = sgd_momentum_step([p], [np.array([2.0])], MomentumState(lr=0.1, momentum=0.0))
    >>> p.round(12).tolist()
    [0.8]
    """
    if len(params) != len(grads):
        raise InvalidInput("params and grads differ in length")
    for p, g in zip(params, grads):
        if p.shape != np.shape(g):
            raise InvalidInput(f"gradient shape {np.shape(g)} does not match parameter {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericalError("non-finite gradient; the loss diverged")
    if not state.velocity:
        state.velocity = [np.zeros_like(p, dtype=np.float64) for p in params]
    for p, g, v in zip(params, grads, state.velocity):
        v *= state.momentum
        v += g
        p -= state.lr * v
    return params, state

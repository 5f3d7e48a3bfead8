# -*- coding: utf-8 -*-

"""Adam optimiser over named parameter tensors."""

import logging

import numpy as np

from . import settings


LOGGER = logging.getLogger(__name__)


class Adam(object):
    """Adam with L2 weight decay added to the gradient.

    Attributes
    ----------
    params: list of tuple
        ``(name, Tensor)`` pairs updated in place by :meth:`step`.
    lr: float
        Constant learning rate.
    weight_decay: float
        L2 coefficient.
    """

    def __init__(self, named_params, lr=settings.LEARNING_RATE,
                 weight_decay=settings.WEIGHT_DECAY,
                 betas=settings.ADAM_BETAS, eps=settings.ADAM_EPSILON):
        self.params = list(named_params)
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.steps = 0
        self._m = {name: np.zeros_like(p.data) for name, p in self.params}
        self._v = {name: np.zeros_like(p.data) for name, p in self.params}

    def zero_grad(self):
        for _, p in self.params:
            p.zero_grad()

    def step(self):
        """Apply one update from the gradients currently held.

        Parameters without a gradient are only decayed.
        """
        self.steps += 1
        correction1 = 1.0 - self.beta1 ** self.steps
        correction2 = 1.0 - self.beta2 ** self.steps
        for name, p in self.params:
            grad = p.grad if p.grad is not None else np.zeros_like(p.data)
            grad = grad + self.weight_decay * p.data
            m = self._m[name] = self.beta1 * self._m[name] \
                + (1.0 - self.beta1) * grad
            v = self._v[name] = self.beta2 * self._v[name] \
                + (1.0 - self.beta2) * grad * grad
            p.data = p.data - self.lr * (m / correction1) / \
                (np.sqrt(v / correction2) + self.eps)

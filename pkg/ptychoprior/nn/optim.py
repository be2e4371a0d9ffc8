"""
Optimizers
Plain SGD and bias-corrected Adam over Tensor parameters.
Parameters with requires_grad=False are frozen: skipped, state untouched.
"""
import numpy as np

from ptychoprior.errors import DomainError, GradientError

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class Optimizer:
    def __init__(self, params, kind='adam', lr=1e-3):
        if kind not in ('sgd', 'adam'):
            raise DomainError(f"unknown optimizer kind '{kind}'")
        if lr <= 0:
            raise DomainError(f"learning rate must be positive, got {lr}")
        self.params = list(params)
        self.kind = kind
        self.lr = float(lr)
        self.beta1, self.beta2, self.eps = ADAM_BETA1, ADAM_BETA2, ADAM_EPS
        self.state = {}  # param index -> {'m', 'v', 't'}
        self.step_count = 0

    def zero_grad(self):
        for param in self.params:
            param.grad = None

    def reset_state(self, params=None):
        """Drop moment buffers so the next update starts from zero moments"""
        targets = self.params if params is None else params
        target_ids = {id(p) for p in targets}
        for index, param in enumerate(self.params):
            if id(param) in target_ids:
                self.state.pop(index, None)

    def step(self):
        self.step_count += 1
        for index, param in enumerate(self.params):
            if not param.requires_grad:
                continue
            if param.grad is None:
                raise GradientError(f"parameter '{param.name or index}' has no gradient")
            if self.kind == 'sgd':
                param.data -= self.lr * param.grad
                continue
            slot = self.state.get(index)
            if slot is None:
                slot = self.state[index] = {
                    'm': np.zeros_like(param.data), 'v': np.zeros_like(param.data), 't': 0}
            grad = param.grad
            slot['t'] += 1
            slot['m'] = self.beta1 * slot['m'] + (1.0 - self.beta1) * grad
            slot['v'] = self.beta2 * slot['v'] + (1.0 - self.beta2) * (grad * grad)
            m_hat = slot['m'] / (1.0 - self.beta1 ** slot['t'])
            v_hat = slot['v'] / (1.0 - self.beta2 ** slot['t'])
            param.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

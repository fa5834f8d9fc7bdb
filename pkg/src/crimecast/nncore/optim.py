import numpy as np

from .errors import NonFiniteError


class Adam:
    """Adaptive-moment optimiser with bias-corrected first and second moments.

    Moment buffers are keyed by parameter name, so the same optimiser can be
    fed ``Layer.named_parameters()`` on every step.
    """

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, named_params):
        named_params = list(named_params)
        for name, param, grad in named_params:
            if param.shape != grad.shape:
                raise ValueError(f"{name}: gradient shape {grad.shape} != parameter shape {param.shape}")
            if not np.all(np.isfinite(grad)):
                raise NonFiniteError(f"non-finite gradient in parameter {name!r}")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr1 = 1.0 - b1 ** self.t
        corr2 = 1.0 - b2 ** self.t
        for name, param, grad in named_params:
            if name not in self.m:
                self.m[name] = np.zeros_like(param)
                self.v[name] = np.zeros_like(param)
            m, v = self.m[name], self.v[name]
            m *= b1
            m += (1.0 - b1) * grad
            v *= b2
            v += (1.0 - b2) * grad * grad
            param -= self.lr * (m / corr1) / (np.sqrt(v / corr2) + self.eps)


def optimizer_step(params, grads, state):
    """Functional form: ``params`` and ``grads`` are dicts of arrays keyed by name."""
    state.step((k, params[k], grads[k]) for k in params)
    return params

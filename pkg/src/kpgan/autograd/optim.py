"""Adam with bias correction over a named parameter collection."""
import numpy as np


class TrainingError(RuntimeError):
    pass


class Adam:
    def __init__(self, params, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = dict(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def step(self, grads=None):
        """Apply one update. ``grads`` defaults to each parameter's ``.grad``;
        parameters without a gradient are left untouched."""
        if grads is None:
            grads = {k: p.grad for k, p in self.params.items()}
        for name, g in grads.items():
            if g is not None and not np.all(np.isfinite(g)):
                raise TrainingError(f"non-finite gradient for parameter '{name}'")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for name, p in self.params.items():
            g = grads.get(name)
            if g is None:
                continue
            if g.shape != p.data.shape:
                raise TrainingError(f"gradient shape {g.shape} != parameter shape "
                                    f"{p.data.shape} for '{name}'")
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            update = self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            p.data -= update.astype(p.data.dtype)

    def state_arrays(self):
        out = {"step": np.asarray(self.t, dtype=np.float32)}
        for name in self.params:
            out["m/" + name] = self.m[name]
            out["v/" + name] = self.v[name]
        return out

    def load_state_arrays(self, arrays):
        self.t = int(arrays["step"])
        for name in self.params:
            self.m[name] = np.array(arrays["m/" + name], dtype=self.m[name].dtype)
            self.v[name] = np.array(arrays["v/" + name], dtype=self.v[name].dtype)

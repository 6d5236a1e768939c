"""Plain Lloyd K-means with seeded restarts."""
import numpy as np

RESTARTS = 10
TOL = 1e-6


def kmeans(x, k, restarts=RESTARTS, seed=0, tol=TOL, max_iter=500):
    """Best of ``restarts`` runs by inertia; returns ``(labels, centres, inertia)``.

    Each run starts from ``k`` distinct random rows and iterates until no
    centre moves more than ``tol``. A cluster that empties is re-seeded at
    the point farthest from its current centre.
    """
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    if not 1 <= k <= n:
        raise ValueError(f"cannot form {k} clusters from {n} points")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(restarts):
        centres = x[rng.choice(n, size=k, replace=False)].copy()
        for _ in range(max_iter):
            d2 = ((x[:, None, :] - centres[None]) ** 2).sum(-1)
            labels = np.argmin(d2, axis=1)
            new = centres.copy()
            for c in range(k):
                members = labels == c
                if members.any():
                    new[c] = x[members].mean(axis=0)
                else:
                    far = int(np.argmax(d2[np.arange(n), labels]))
                    new[c] = x[far]
                    labels[far] = c
            shift = np.sqrt(((new - centres) ** 2).sum(-1)).max()
            centres = new
            if shift < tol:
                break
        d2 = ((x[:, None, :] - centres[None]) ** 2).sum(-1)
        labels = np.argmin(d2, axis=1)
        inertia = float(d2[np.arange(n), labels].sum())
        if best is None or inertia < best[2]:
            best = (labels, centres, inertia)
    return best

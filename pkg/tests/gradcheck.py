"""Central finite-difference gradient checks."""

import numpy as np
import torch


def sampled_gradient_agreement(model, loss_fn, num_samples=100, step=1e-4, seed=0):
    """Fraction of sampled parameter entries whose analytic and central-difference
    gradients agree within 1e-3 relative error."""
    model.zero_grad()
    loss_fn().backward()
    params = [p for p in model.parameters() if p.grad is not None]
    rng = np.random.default_rng(seed)
    agree = 0
    for _ in range(num_samples):
        p = params[int(rng.integers(len(params)))]
        idx = tuple(int(rng.integers(s)) for s in p.shape)
        analytic = float(p.grad[idx])
        with torch.no_grad():
            original = float(p[idx])
            p[idx] = original + step
            plus = float(loss_fn())
            p[idx] = original - step
            minus = float(loss_fn())
            p[idx] = original
        numeric = (plus - minus) / (2 * step)
        rel = abs(analytic - numeric) / max(abs(analytic) + abs(numeric), 1e-5)
        agree += rel < 1e-3
    return agree / num_samples

"""Pure-NumPy twin of the compiled RK4 kernel (same algorithm, same outputs)."""

import numpy as np


def _gram_defect(x):
    gram = x.conj().T @ x
    gram[np.diag_indices_from(gram)] -= 1.0
    return gram, float(np.linalg.norm(gram))


def rk4_propagate(gen, u, h, reunitarize=True, max_polish=6):
    steps = (gen.shape[0] - 1) // 2
    half, sixth = 0.5 * h, h / 6.0
    ident = np.eye(u.shape[0])
    x = u.copy()
    worst = 0.0
    for s in range(steps):
        g0, gm, g1 = gen[2 * s], gen[2 * s + 1], gen[2 * s + 2]
        k1 = g0 @ x
        k2 = gm @ (x + half * k1)
        k3 = gm @ (x + half * k2)
        k4 = g1 @ (x + h * k3)
        x = x + sixth * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        gram, defect = _gram_defect(x)
        worst = max(worst, defect)
        if not reunitarize:
            continue
        for _ in range(max_polish):
            if defect < 1e-15:
                break
            x = x @ (ident - 0.5 * gram)
            gram, defect = _gram_defect(x)
    u[...] = x
    return worst

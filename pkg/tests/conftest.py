import sys
from pathlib import Path

import numpy as np

# allow running the suite without installing the package
SRC = Path(__file__).resolve().parent.parent / "src"
if str(SRC) not in sys.path:
    sys.path.insert(0, str(SRC))

from taskadapt import autodiff as ad  # noqa: E402


def finite_difference_check(build_loss, param_arrays, h=1e-5, tol=1e-4):
    """Compare analytic gradients against central finite differences.

    ``build_loss`` receives a list of leaf Tensors (one per array in
    ``param_arrays``) and must return a scalar Tensor; it is re-invoked for
    every perturbed evaluation so the oracle stays independent of any cached
    graph. Returns the worst relative error found.
    """
    leaves = [ad.Tensor(p, requires_grad=True) for p in param_arrays]
    loss = build_loss(leaves)
    ad.backward(loss)
    analytic = [np.zeros_like(p) if t.grad is None else np.array(t.grad, dtype=np.float64)
                for p, t in zip(param_arrays, leaves)]

    def value_at(arrays):
        out = build_loss([ad.Tensor(a) for a in arrays])
        return float(out.data)

    worst = 0.0
    for i, base in enumerate(param_arrays):
        flat = base.reshape(-1)
        for j in range(flat.size):
            bumped = [a.copy() for a in param_arrays]
            bumped[i].reshape(-1)[j] = flat[j] + h
            f_plus = value_at(bumped)
            bumped[i].reshape(-1)[j] = flat[j] - h
            f_minus = value_at(bumped)
            fd = (f_plus - f_minus) / (2.0 * h)
            g = analytic[i].reshape(-1)[j]
            err = abs(fd - g) / max(1.0, abs(fd), abs(g))
            worst = max(worst, err)
    assert worst < tol, f"finite-difference mismatch: worst relative error {worst:.3e}"
    return worst

"""Central finite-difference oracle shared by the gradient tests.

Kept deliberately independent of the backward-pass code under test: it only
ever calls forward evaluations.
"""

import numpy as np

from deepdeff.cells import named_arrays

FD_STEP = 1e-5
REL_TOL = 1e-4


def fd_gradient_of_array(loss_fn, arr, h=FD_STEP):
    """Central differences of loss_fn() w.r.t. every entry of ``arr``.

    ``arr`` is perturbed in place and restored; ``loss_fn`` must read it.
    """
    grad = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = arr[idx]
        arr[idx] = orig + h
        f_plus = loss_fn()
        arr[idx] = orig - h
        f_minus = loss_fn()
        arr[idx] = orig
        grad[idx] = (f_plus - f_minus) / (2.0 * h)
    return grad


def fd_param_grads(loss_fn, params, h=FD_STEP):
    """FD gradients for every field of a parameter dataclass."""
    return {
        name: fd_gradient_of_array(loss_fn, arr, h) for name, arr in named_arrays(params)
    }


def max_rel_error(analytic, numeric, floor=1e-3):
    """Worst-case relative error; tiny entries are compared at ``floor`` scale
    so FD noise on near-zero gradients is not amplified."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / scale))


def check_param_grads(analytic_params, numeric_dict, tol=REL_TOL):
    """Assert every parameter array's gradient agrees with the oracle."""
    worst = 0.0
    for name, arr in named_arrays(analytic_params):
        err = max_rel_error(arr, numeric_dict[name])
        worst = max(worst, err)
        assert err < tol, f"gradient mismatch on {name}: rel err {err:.3e}"
    return worst

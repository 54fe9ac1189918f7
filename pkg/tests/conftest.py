import numpy as np
import pytest

from almeta import autodiff as ad


@pytest.fixture
def f64():
    """Run a test in float64 mode (gradient checks need the headroom)."""
    with ad.precision("float64"):
        yield


def numeric_grad(f, arrays, step=1e-5):
    """Central finite differences of scalar f w.r.t. a dict of arrays."""
    grads = {}
    for name, arr in arrays.items():
        g = np.zeros_like(arr, dtype=np.float64)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = f()
            flat[i] = orig - step
            down = f()
            flat[i] = orig
            gflat[i] = (up - down) / (2 * step)
        grads[name] = g
    return grads


def rel_err(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0), 1e-8)
    return np.abs(a - b).max(initial=0.0) / denom


def check_grads(build_loss, arrays, rel_tol=1e-4, step=1e-5):
    """Compare tape gradients of build_loss() against finite differences.

    ``arrays`` are plain numpy buffers; ``build_loss`` wraps them in fresh
    Tensors each call and returns (loss_tensor, tensor_map).
    """
    loss, tmap = build_loss()
    ad.backward(loss)
    analytic = {k: (t.grad if t.grad is not None else np.zeros_like(t.data)) for k, t in tmap.items()}

    def scalar():
        l, _ = build_loss()
        return float(l.data)

    numeric = numeric_grad(scalar, arrays, step=step)
    for name in arrays:
        err = rel_err(analytic[name], numeric[name])
        assert err < rel_tol, f"gradient mismatch for {name}: rel err {err:.2e}"

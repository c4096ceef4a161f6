"""Independent oracles shared by the unit and acceptance tests."""
import numpy as np

from heartnoise.models.cnn import cnn_init, fit_normalization, loss_and_grads


def fd_gradient_error(seed, shape=(12, 12), batch=3, per_param=12, h=1e-6, dropout=True):
    """Worst norm-wise relative error between analytic and central-difference gradients.

    For each parameter tensor a random subset of entries is perturbed and
    the error is ``||analytic - numeric|| / max(||analytic||, ||numeric||)``
    over that subset. The norm-wise form keeps near-zero entries, whose
    finite differences are dominated by round-off, from swamping the
    measure, and a 1e-8 floor on the denominator (well above the
    difference round-off) covers subsets that are all dead-ReLU zeros.
    The output layer is scaled down so logits are O(1): a saturated
    softmax drives true gradients below what central differences resolve.
    Dropout masks are fixed by a seed so the loss is a deterministic
    function of the parameters; every layer type takes part.
    """
    rng = np.random.default_rng(seed)
    m = cnn_init(shape, seed=seed)
    X = rng.standard_normal((batch,) + tuple(shape))
    fit_normalization(m, X)
    m.params["dense2_W"] = m.params["dense2_W"] * 0.1
    y = np.array([1, -1, 1][:batch])
    drop = seed + 100 if dropout else None
    _, grads = loss_and_grads(m, X, y, seed=drop)
    worst = 0.0
    for name, p in m.params.items():
        flat = p.reshape(-1)
        picks = rng.choice(flat.size, size=min(per_param, flat.size), replace=False)
        num = np.empty(picks.size)
        for j, i in enumerate(picks):
            old = flat[i]
            flat[i] = old + h
            up, _ = loss_and_grads(m, X, y, seed=drop)
            flat[i] = old - h
            down, _ = loss_and_grads(m, X, y, seed=drop)
            flat[i] = old
            num[j] = (up - down) / (2 * h)
        ana = grads[name].reshape(-1)[picks]
        scale = max(np.linalg.norm(ana), np.linalg.norm(num), 1e-8)
        worst = max(worst, np.linalg.norm(ana - num) / scale)
    return worst


def two_cluster_images(n, shape=(16, 16), seed=0):
    """Toy 2-class image set: abnormal images carry a bright horizontal band."""
    rng = np.random.default_rng(seed)
    y = np.where(np.arange(n) % 2 == 0, -1, 1)
    X = rng.standard_normal((n,) + shape) * 0.5
    X[y == 1, shape[0] // 2 - 2:shape[0] // 2 + 2, :] += 1.5
    return X, y

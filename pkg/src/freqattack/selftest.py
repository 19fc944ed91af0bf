"""Fast invariant checks run by ``freqattack selftest``.

Each check returns ``None`` on success or raises ``AssertionError`` with a
short explanation. Modules are looked up at call time so a patched function
is what gets checked.
"""
import time

import numpy as np

from . import attack, constraint, model, training, transform
from .data import LabeledDataset


def _naive_dct2(plane):
    d = plane.shape[0]
    out = np.zeros((d, d))
    for k in range(d):
        for l in range(d):
            acc = 0.0
            for i in range(d):
                for j in range(d):
                    acc += (plane[i, j] * np.cos(np.pi * (2 * i + 1) * k / (2 * d))
                            * np.cos(np.pi * (2 * j + 1) * l / (2 * d)))
            ak = np.sqrt((1 if k == 0 else 2) / d)
            al = np.sqrt((1 if l == 0 else 2) / d)
            out[k, l] = ak * al * acc
    return out


def check_dct_round_trip():
    rng = np.random.default_rng(0)
    for d in (2, 8, 16, 32, 299):
        x = rng.normal(size=(d, d))
        y = transform.dct2(x)
        err = np.abs(transform.idct2(y) - x).max()
        assert err <= 1e-9, f"d={d}: round trip error {err:.3g}"
        parseval = abs(np.sum(y * y) - np.sum(x * x)) / np.sum(x * x)
        assert parseval <= 1e-9, f"d={d}: Parseval error {parseval:.3g}"


def check_dct_definition():
    rng = np.random.default_rng(1)
    for d in (2, 5, 8):
        x = rng.normal(size=(d, d))
        err = np.abs(transform.dct2(x) - _naive_dct2(x)).max()
        assert err <= 1e-9, f"d={d}: differs from the definition by {err:.3g}"


def check_mask_cardinality():
    expected = {"low": 16384, "high": 16501, "mid": 16419, "random": 16501}
    for kind, count in expected.items():
        got = constraint.build_mask(kind, 299, 128, seed=0).preserved
        assert got == count, f"{kind} mask at d=299, n=128 keeps {got}, expected {count}"
    for n in (256, 64, 32):
        assert constraint.build_mask("low", 299, n).preserved == n * n, f"low mask n={n}"
        for kind in ("high", "mid", "random"):
            got = constraint.build_mask(kind, 299, n, seed=3).preserved
            assert abs(got - n * n) <= 2 * 299, f"{kind} mask n={n} keeps {got}"


def check_projection_laws():
    rng = np.random.default_rng(2)
    for kind in ("low", "high", "mid", "random"):
        p = constraint.FreqMask(constraint.build_mask(kind, 16, 6, seed=5))
        a, b = rng.normal(size=(2, 16, 16, 2))
        pa = p.apply(a)
        assert np.abs(p.apply(pa) - pa).max() <= 1e-9, f"{kind}: not idempotent"
        lhs, rhs = np.sum(pa * b), np.sum(a * p.apply(b))
        assert abs(lhs - rhs) <= 1e-9 * (1 + abs(lhs)), f"{kind}: not self-adjoint"
        lin = p.apply(2.0 * a - b) - (2.0 * pa - p.apply(b))
        assert np.abs(lin).max() <= 1e-9, f"{kind}: not linear"


def _tiny_model(seed=0):
    arch = model.default_architecture(num_classes=4, width=0.5)
    return model.Classifier(arch, (8, 8, 1), seed=seed)


def _rel(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-8)


def check_input_gradient():
    rng = np.random.default_rng(3)
    m = _tiny_model()
    x = rng.uniform(size=(2, 8, 8, 1))
    y = np.array([1, 3])
    cons = [constraint.NoConstraint(), constraint.make_constraint("freq_mask", 8, 4, "low"),
            constraint.GaussianSmooth(1.0), constraint.DownUp(4)]
    for c in cons:
        delta = rng.uniform(-0.05, 0.05, size=x.shape)
        g = attack.constrained_gradient(m, x, delta, y, c)

        def f(dl):
            return m.losses(x + c.apply(dl), y).sum()

        for _ in range(4):
            idx = tuple(rng.integers(0, s) for s in x.shape)
            h = 1e-5
            up, dn = delta.copy(), delta.copy()
            up[idx] += h
            dn[idx] -= h
            fd = (f(up) - f(dn)) / (2 * h)
            assert _rel(g[idx], fd) <= 1e-4 or abs(g[idx] - fd) <= 1e-8, \
                f"{c.kind}: gradient {g[idx]:.6g} vs finite difference {fd:.6g}"


def check_param_gradient():
    rng = np.random.default_rng(4)
    m = _tiny_model(1)
    x = rng.uniform(size=(3, 8, 8, 1))
    y = np.array([0, 2, 3])
    _, grads = m.param_gradient(x, y)
    for _ in range(6):
        layer = int(rng.choice([i for i, p in enumerate(m.params) if p]))
        key = sorted(m.params[layer])[int(rng.integers(len(m.params[layer])))]
        arr = m.params[layer][key]
        idx = tuple(rng.integers(0, s) for s in arr.shape)
        h = 1e-5
        old = arr[idx]
        arr[idx] = old + h
        up = m.loss(x, y)
        arr[idx] = old - h
        dn = m.loss(x, y)
        arr[idx] = old
        fd = (up - dn) / (2 * h)
        got = grads[layer][key][idx]
        assert _rel(got, fd) <= 1e-4 or abs(got - fd) <= 1e-8, \
            f"layer {layer} {key}: gradient {got:.6g} vs finite difference {fd:.6g}"


def check_reductions():
    rng = np.random.default_rng(5)
    m = _tiny_model(2)
    x = rng.uniform(size=(4, 8, 8, 1))
    y = np.array([0, 1, 2, 3])
    eps = 8 / 255
    a = attack.run_attack(m, x, y, attack.AttackSpec("mim", eps, 1)).adversarial
    b = attack.run_attack(m, x, y, attack.AttackSpec("fgsm", eps, 1)).adversarial
    assert np.array_equal(a, b), "mim with one iteration differs from fgsm"
    full = constraint.make_constraint("freq_mask", 8, 8, "low")
    c = attack.run_attack(m, x, y, attack.AttackSpec("mim", eps, 5, constraint=full)).adversarial
    d = attack.run_attack(m, x, y, attack.AttackSpec("mim", eps, 5)).adversarial
    assert np.abs(c - d).max() <= 1e-9, "all-pass mask differs from the unconstrained attack"


def check_zero_epsilon_training():
    rng = np.random.default_rng(6)
    data = LabeledDataset(rng.uniform(size=(24, 8, 8, 1)), rng.integers(0, 4, 24), "train", 4)
    cfg = training.TrainConfig(epochs=1, batch_size=8, seed=9)
    clean, _ = training.train(_tiny_model(3), data, cfg)
    adv, _ = training.adversarial_train(_tiny_model(3), data, training.training_adversary(0.0, 2), cfg)
    assert np.array_equal(clean.flat_params(), adv.flat_params()), \
        "adversarial training with epsilon 0 differs from clean training"


def check_epsilon_ball():
    rng = np.random.default_rng(7)
    m = _tiny_model(4)
    x = rng.uniform(size=(3, 8, 8, 1))
    y = np.array([0, 1, 2])
    for method in ("fgsm", "bim", "mim"):
        for c in (constraint.NoConstraint(), constraint.make_constraint("freq_mask", 8, 3, "low"),
                  constraint.GaussianSmooth(1.0), constraint.DownUp(4)):
            eps = 6 / 255
            iters = 1 if method == "fgsm" else 4

            def step(_, delta):
                assert np.abs(delta).max() <= eps + 1e-12, f"{method}/{c.kind}: outside the ball"
                assert (x + delta).min() >= -1e-12 and (x + delta).max() <= 1 + 1e-12, \
                    f"{method}/{c.kind}: outside [0, 1]"

            res = attack.run_attack(m, x, y, attack.AttackSpec(method, eps, iters, constraint=c),
                                    on_step=step)
            assert np.abs(res.perturbation).max() <= eps + 1e-12, \
                f"{method}/{c.kind}: final perturbation outside the ball"


CHECKS = [
    ("dct_round_trip", check_dct_round_trip),
    ("dct_definition", check_dct_definition),
    ("mask_cardinality", check_mask_cardinality),
    ("projection_laws", check_projection_laws),
    ("input_gradient", check_input_gradient),
    ("param_gradient", check_param_gradient),
    ("reduction_identities", check_reductions),
    ("zero_epsilon_training", check_zero_epsilon_training),
    ("epsilon_ball", check_epsilon_ball),
]


def run_selftest(report=print, checks=None):
    """Run every check, report one line each, and return the names of failures."""
    failed = []
    for name, fn in checks or CHECKS:
        start = time.perf_counter()
        try:
            fn()
        except AssertionError as exc:
            failed.append(name)
            report(f"FAIL {name}: {exc}")
            continue
        except Exception as exc:
            failed.append(name)
            report(f"FAIL {name}: {type(exc).__name__}: {exc}")
            continue
        report(f"ok   {name} ({time.perf_counter() - start:.2f}s)")
    return failed

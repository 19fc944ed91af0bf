import numpy as np
import pytest
from hypothesis import given, strategies as st

from freqattack.attack import (
    AttackSpec, constrained_gradient, derive_targets, ensemble_loss_and_gradient, example_seed,
    fgsm_step, pick_target_label, run_attack,
)
from freqattack.constraint import DownUp, FreqMask, GaussianSmooth, NoConstraint, build_mask
from freqattack.errors import InvalidInputError, NumericalError
from freqattack.model import Classifier, default_architecture
from freqattack.transform import dct_image

EPS = 8 / 255


@pytest.fixture
def batch(rng):
    return rng.uniform(size=(6, 8, 8, 1)), np.array([0, 1, 2, 3, 0, 1])


def reference_attack(model, x, y, eps, iters, alpha, mu, method, s=1.0):
    """Straight-line re-implementation of the iterative update, one example at a time."""
    out = []
    for xi, yi in zip(x, y):
        delta = np.zeros_like(xi)
        g = np.zeros_like(xi)
        for _ in range(iters):
            grad = model.input_gradient(xi + delta, yi)
            if method == "mim":
                g = mu * g + grad / np.abs(grad).sum()
            else:
                g = grad
            delta = np.clip(delta + s * alpha * np.sign(g), -eps, eps)
            delta = np.clip(xi + delta, 0, 1) - xi
        out.append(np.clip(xi + delta, 0, 1))
    return np.stack(out)


@pytest.mark.parametrize("method", ["mim", "bim"])
def test_matches_reference_loop(tiny_model, batch, method):
    x, y = batch
    spec = AttackSpec(method, EPS, 5, step_size=0.01, momentum_decay=0.7)
    got = run_attack(tiny_model, x, y, spec).adversarial
    ref = reference_attack(tiny_model, x, y, EPS, 5, 0.01, 0.7, method)
    assert np.abs(got - ref).max() <= 1e-12


def test_targeted_matches_reference(tiny_model, batch):
    x, y = batch
    targets = (y + 1) % 4
    spec = AttackSpec("bim", EPS, 4, targeted=True)
    got = run_attack(tiny_model, x, y, spec, targets=targets)
    ref = reference_attack(tiny_model, x, targets, EPS, 4, EPS / 4, 1.0, "bim", s=-1.0)
    assert np.abs(got.adversarial - ref).max() <= 1e-12
    assert np.array_equal(got.attack_labels, targets)


def test_mim_one_iteration_is_fgsm(tiny_model, batch):
    x, y = batch
    for c in (NoConstraint(), FreqMask(build_mask("low", 8, 3)), GaussianSmooth(1.0)):
        a = run_attack(tiny_model, x, y, AttackSpec("mim", EPS, 1, constraint=c)).adversarial
        b = run_attack(tiny_model, x, y, AttackSpec("fgsm", EPS, 1, constraint=c)).adversarial
        assert np.array_equal(a, b)


def test_all_pass_mask_equals_unconstrained(tiny_model, batch):
    x, y = batch
    full = FreqMask(build_mask("low", 8, 8))
    a = run_attack(tiny_model, x, y, AttackSpec("mim", EPS, 10, constraint=full)).adversarial
    b = run_attack(tiny_model, x, y, AttackSpec("mim", EPS, 10)).adversarial
    assert np.abs(a - b).max() <= 1e-9


def test_zero_epsilon_is_identity(tiny_model, batch):
    x, y = batch
    for method in ("fgsm", "bim", "mim"):
        res = run_attack(tiny_model, x, y, AttackSpec(method, 0.0, 1 if method == "fgsm" else 3))
        assert np.array_equal(res.adversarial, x)


def test_attack_raises_loss(tiny_model, batch):
    x, y = batch
    adv = run_attack(tiny_model, x, y, AttackSpec("bim", EPS, 10)).adversarial
    assert tiny_model.losses(adv, y).sum() > tiny_model.losses(x, y).sum()


def test_fgsm_step_values():
    g = np.array([-2.0, 0.0, 3.0])
    assert np.array_equal(fgsm_step(g, 0.5), [-0.5, 0.0, 0.5])
    assert np.array_equal(fgsm_step(g, 0.5, -1), [0.5, 0.0, -0.5])
    with pytest.raises(NumericalError):
        fgsm_step(np.array([np.nan]), 0.1)
    with pytest.raises(InvalidInputError):
        fgsm_step(g, 0.1, 2)


def test_ensemble_averages_members(batch):
    x, y = batch
    models = [Classifier(default_architecture(4, 0.5), (8, 8, 1), seed=s) for s in range(3)]
    loss, grad = ensemble_loss_and_gradient(models, x, y)
    assert np.allclose(grad, np.mean([m.input_gradient(x, y) for m in models], axis=0))
    assert np.allclose(loss, np.mean([m.losses(x, y) for m in models], axis=0))


@pytest.mark.parametrize("c", [FreqMask(build_mask("mid", 8, 4)), GaussianSmooth(0.8), DownUp(5)])
def test_constrained_gradient_finite_difference(tiny_model, batch, c, rng):
    x, y = batch
    delta = rng.uniform(-0.03, 0.03, size=x.shape)
    g = constrained_gradient(tiny_model, x, delta, y, c)
    for _ in range(10):
        idx = tuple(int(rng.integers(0, s)) for s in x.shape)
        up, dn = delta.copy(), delta.copy()
        up[idx] += 1e-5
        dn[idx] -= 1e-5
        fd = (tiny_model.losses(x + c.apply(up), y).sum()
              - tiny_model.losses(x + c.apply(dn), y).sum()) / 2e-5
        assert abs(g[idx] - fd) <= 1e-4 * max(abs(fd), abs(g[idx]), 1e-4)


@pytest.mark.parametrize("kind", ["low", "high", "mid", "random"])
def test_output_spectrally_confined(tiny_model, batch, kind):
    x, y = batch
    mask = build_mask(kind, 8, 4, seed=2)
    res = run_attack(tiny_model, x, y, AttackSpec("mim", EPS, 5, constraint=FreqMask(mask)))
    spec = dct_image(res.constrained_delta)
    assert np.abs(spec[:, mask.cells == 0, :]).max() <= 1e-9
    assert np.abs(res.constrained_delta).max() <= EPS + 1e-12


@given(method=st.sampled_from(["fgsm", "bim", "mim"]),
       cons=st.sampled_from(["none", "low", "random", "gauss", "downup"]),
       eps=st.floats(0.0, 0.2), iters=st.integers(1, 6), targeted=st.booleans(),
       seed=st.integers(0, 2**31))
def test_epsilon_ball_every_iteration(method, cons, eps, iters, targeted, seed):
    rng = np.random.default_rng(seed)
    model = Classifier(default_architecture(4, 0.5), (8, 8, 1), seed=seed % 7)
    x = rng.uniform(size=(2, 8, 8, 1))
    x[0, 0, 0, 0], x[1, 1, 1, 0] = 0.0, 1.0
    y = rng.integers(0, 4, 2)
    c = {"none": NoConstraint(), "low": FreqMask(build_mask("low", 8, 3)),
         "random": FreqMask(build_mask("random", 8, 3, seed=seed)),
         "gauss": GaussianSmooth(1.0), "downup": DownUp(4)}[cons]
    spec = AttackSpec(method, eps, 1 if method == "fgsm" else iters, targeted=targeted,
                      constraint=c, seed=seed)

    def check(_, delta):
        assert np.abs(delta).max() <= eps + 1e-12
        assert (x + delta).min() >= 0.0 and (x + delta).max() <= 1.0

    res = run_attack(model, x, y, spec, on_step=check)
    assert np.abs(res.perturbation).max() <= eps + 1e-12
    assert res.adversarial.min() >= 0.0 and res.adversarial.max() <= 1.0


def test_single_image_shapes(tiny_model, batch):
    x, y = batch
    res = run_attack(tiny_model, x[0], y[0], AttackSpec("bim", EPS, 2))
    assert res.adversarial.shape == (8, 8, 1) and int(res.attack_labels) == y[0]


def test_determinism(tiny_model, batch):
    x, y = batch
    spec = AttackSpec("mim", EPS, 4, targeted=True, target_rule="random", seed=9)
    a, b = run_attack(tiny_model, x, y, spec), run_attack(tiny_model, x, y, spec)
    assert np.array_equal(a.adversarial, b.adversarial)
    assert np.array_equal(a.attack_labels, b.attack_labels)


def test_next_target_rule():
    assert [pick_target_label(y, 4, "next") for y in range(4)] == [1, 2, 3, 0]


def test_random_targets_uniform_over_others():
    k, true = 5, 2
    draws = [pick_target_label(true, k, "random", example_seed(3, i)) for i in range(4000)]
    counts = np.bincount(draws, minlength=k)
    assert counts[true] == 0
    others = np.delete(counts, true)
    chi2 = ((others - 1000.0) ** 2 / 1000.0).sum()
    assert chi2 < 16.27  # 0.999 quantile, 3 degrees of freedom


def test_derived_targets_depend_on_index_only():
    spec = AttackSpec("mim", EPS, 2, targeted=True, target_rule="random", seed=4)
    labels = np.arange(20) % 10
    whole = derive_targets(labels, 10, spec)
    parts = np.concatenate([derive_targets(labels[:7], 10, spec),
                            derive_targets(labels[7:], 10, spec, offset=7)])
    assert np.array_equal(whole, parts)


def test_targets_equal_to_labels_rejected(tiny_model, batch):
    x, y = batch
    with pytest.raises(InvalidInputError):
        run_attack(tiny_model, x, y, AttackSpec("bim", EPS, 2, targeted=True), targets=y)


@pytest.mark.parametrize("kwargs", [dict(method="cw"), dict(epsilon=-0.1), dict(iterations=0),
                                    dict(method="fgsm", iterations=3), dict(step_size=0.5),
                                    dict(momentum_decay=-1.0), dict(target_rule="least")])
def test_invalid_specs(kwargs):
    with pytest.raises(InvalidInputError):
        AttackSpec(**kwargs)


def test_default_step_and_digest():
    spec = AttackSpec("mim", 0.1, 10)
    assert spec.alpha == pytest.approx(0.01)
    assert AttackSpec("fgsm", 0.1, 1).alpha == 0.1
    assert spec.digest() == AttackSpec("mim", 0.1, 10).digest()
    assert spec.digest() != AttackSpec("mim", 0.1, 9).digest()


def test_mismatched_labels(tiny_model, batch):
    x, y = batch
    with pytest.raises(InvalidInputError):
        run_attack(tiny_model, x, y[:3], AttackSpec())

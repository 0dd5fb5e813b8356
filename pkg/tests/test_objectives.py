import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ibcaan import autodiff as ad
from ibcaan.autodiff import Tape, Tensor
from ibcaan.objectives import (
    ce_multiclass,
    class_weights,
    grl_lambda,
    kl_std_normal,
    total_loss,
    weighted_bce,
)
from ibcaan.variants import Variant

LN2 = 0.693147180559945309417232121458
LN4 = 1.38629436111989061883446424292


def naive_bce(logit, y, w):
    s = 1.0 / (1.0 + np.exp(-logit))
    ww = np.where(y == 1, w[1], w[0])
    # positive class is bonafide (y == 0)
    return np.mean(ww * (-(1 - y) * np.log(s) - y * np.log(1 - s)))


def naive_ce(logits, labels):
    p = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
    return np.mean(-np.log(p[np.arange(len(labels)), labels]))


class TestWeightedBCE:
    def test_logit_zero_is_ln2(self):
        assert weighted_bce(Tensor([[0.0]]), [1]).item() == pytest.approx(LN2, abs=1e-15)
        assert weighted_bce(Tensor([[0.0]]), [0]).item() == pytest.approx(LN2, abs=1e-15)

    def test_confident_correct_goes_to_zero(self):
        # bonafide wants large logits, spoof small
        loss = weighted_bce(Tensor([[60.0], [-60.0]]), [0, 1]).item()
        assert 0.0 <= loss < 1e-20

    def test_doubling_weights(self):
        logit = Tensor([[0.3], [-1.2], [2.0]], requires_grad=True)
        y = [0, 1, 1]
        vals, grads = [], []
        for w in [(0.7, 1.3), (1.4, 2.6)]:
            leaf = Tensor(logit.data, requires_grad=True)
            with Tape() as tape:
                loss = weighted_bce(leaf, y, w)
            vals.append(loss.item())
            grads.append(tape.backward(loss, [leaf])[0])
        assert vals[1] == pytest.approx(2 * vals[0], rel=1e-14)
        np.testing.assert_allclose(grads[1] / np.linalg.norm(grads[1]), grads[0] / np.linalg.norm(grads[0]), rtol=1e-14)

    def test_matches_naive_and_survives_large_logits(self, rng):
        for _ in range(20):
            n = 7
            logit = rng.normal(scale=4.0, size=(n, 1))
            y = rng.integers(0, 2, size=n)
            w = tuple(rng.uniform(0.2, 2.0, size=2))
            assert weighted_bce(Tensor(logit), y, w).item() == pytest.approx(naive_bce(logit, y[:, None], w), abs=1e-10)
        big = weighted_bce(Tensor([[50.0], [-50.0]]), [1, 0]).item()
        assert np.isfinite(big) and big == pytest.approx(50.0, rel=1e-12)

    def test_errors(self):
        with pytest.raises(ValueError):
            weighted_bce(Tensor(np.zeros((0, 1))), [])
        with pytest.raises(ValueError):
            weighted_bce(Tensor([[0.0]]), [1], (0.0, 1.0))

    def test_class_weights_sum_to_two_and_invert_frequency(self):
        wb, ws = class_weights([0, 0, 0, 1])
        assert wb + ws == pytest.approx(2.0)
        assert wb * 3 == pytest.approx(ws * 1)


class TestMulticlassCE:
    def test_uniform_logits(self):
        assert ce_multiclass(Tensor(np.zeros((3, 4))), [0, 1, 3]).item() == pytest.approx(LN4, abs=1e-15)

    def test_confident_goes_to_zero(self):
        assert ce_multiclass(Tensor([[100.0, 0.0, 0.0]]), [0]).item() < 1e-40

    def test_matches_naive(self, rng):
        for _ in range(50):
            logits = rng.normal(size=(5, 3))
            labels = rng.integers(0, 3, size=5)
            assert abs(ce_multiclass(Tensor(logits), labels).item() - naive_ce(logits, labels)) < 1e-12

    def test_large_logits_finite(self):
        val = ce_multiclass(Tensor([[50.0, -50.0], [800.0, 0.0]]), [1, 1]).item()
        assert np.isfinite(val)

    def test_label_range(self):
        with pytest.raises(ValueError):
            ce_multiclass(Tensor(np.zeros((2, 3))), [0, 3])


class TestKL:
    def test_closed_form_examples(self):
        assert kl_std_normal(Tensor([[0.0]]), Tensor([[1.0]])).item() == 0.0
        assert kl_std_normal(Tensor([[1.0]]), Tensor([[1.0]])).item() == pytest.approx(0.5, abs=1e-15)
        assert kl_std_normal(Tensor([[0.0]]), Tensor([[2.0]])).item() == pytest.approx(
            0.806852819440054690582767878542, abs=1e-14)

    def test_sum_over_dims_mean_over_batch(self):
        mu = Tensor([[1.0, 1.0], [0.0, 0.0]])
        sigma = Tensor(np.ones((2, 2)))
        # per-row KL: 1.0 and 0.0
        assert kl_std_normal(mu, sigma).item() == pytest.approx(0.5)

    def test_zero_only_at_standard_normal(self):
        assert kl_std_normal(Tensor(np.zeros((3, 4))), Tensor(np.ones((3, 4)))).item() == 0.0
        assert kl_std_normal(Tensor([[1e-5]]), Tensor([[1.0]])).item() > 0.0
        assert kl_std_normal(Tensor([[0.0]]), Tensor([[1.0 + 1e-5]])).item() > 1e-12

    @settings(max_examples=200, deadline=None)
    @given(arrays(np.float64, (3, 2), elements=st.floats(-5, 5)),
           arrays(np.float64, (3, 2), elements=st.floats(0.01, 5)))
    def test_nonnegative(self, mu, sigma):
        assert kl_std_normal(Tensor(mu), Tensor(sigma)).item() >= 0.0

    def test_rejects_nonpositive_sigma(self):
        with pytest.raises(ValueError):
            kl_std_normal(Tensor([[0.0]]), Tensor([[0.0]]))


class TestSchedule:
    def test_values(self):
        assert grl_lambda(0.0) == 0.0
        assert grl_lambda(0.5) == pytest.approx(0.986614298151430288881276039237, abs=1e-12)
        assert grl_lambda(1.0) == pytest.approx(0.999909204262595131210990447534, abs=1e-12)

    def test_range_and_monotone(self):
        vals = [grl_lambda(p) for p in np.linspace(0.0, 1.0, 1000)]
        assert all(0.0 <= v < 1.0 for v in vals)
        assert all(b >= a for a, b in zip(vals, vals[1:]))

    def test_out_of_range_clamps_with_warning(self):
        with pytest.warns(UserWarning):
            assert grl_lambda(1.5) == grl_lambda(1.0)
        with pytest.warns(UserWarning):
            assert grl_lambda(-0.1) == 0.0


class TestTotalLoss:
    terms = (Tensor(1.0), Tensor(2.0), Tensor(3.0))

    def test_linear_combination(self):
        total, br = total_loss(*self.terms, Variant.IB_CAAN, beta=0.001, alpha=1.0)
        assert total.item() == pytest.approx(4.002)
        assert br.total == pytest.approx(br.l_c + br.beta * br.l_z + br.alpha * br.l_d)

    def test_erm_ignores_weights(self):
        total, br = total_loss(*self.terms, Variant.ERM, beta=5.0, alpha=7.0)
        assert total.item() == 1.0 and br.l_z is None and br.l_d is None

    @pytest.mark.parametrize("variant,has_z,has_d", [
        (Variant.IB_ONLY, True, False),
        (Variant.CAAN_ONLY, False, True),
        (Variant.IB_DANN, True, True),
        (Variant.IB_CAAN, True, True),
    ])
    def test_term_menu(self, variant, has_z, has_d):
        _, br = total_loss(*self.terms, variant, beta=1.0, alpha=1.0)
        assert (br.l_z is not None) == has_z
        assert (br.l_d is not None) == has_d

    def test_zero_weights(self):
        total, _ = total_loss(*self.terms, Variant.IB_CAAN, beta=0.0, alpha=0.0)
        assert total.item() == 1.0

    def test_missing_adversarial_term(self):
        total, br = total_loss(Tensor(1.0), Tensor(2.0), None, Variant.IB_CAAN, beta=0.5, alpha=1.0)
        assert br.l_d is None and total.item() == 2.0

    def test_negative_weights(self):
        with pytest.raises(ValueError):
            total_loss(*self.terms, Variant.IB_CAAN, beta=-1.0, alpha=1.0)


def test_losses_are_permutation_invariant(rng):
    n = 9
    logit = rng.normal(size=(n, 1))
    y = rng.integers(0, 2, size=n)
    mu, sigma = rng.normal(size=(n, 3)), rng.uniform(0.5, 2.0, size=(n, 3))
    att, lab = rng.normal(size=(n, 4)), rng.integers(0, 4, size=n)
    perm = rng.permutation(n)
    assert weighted_bce(Tensor(logit), y, (0.8, 1.2)).item() == pytest.approx(
        weighted_bce(Tensor(logit[perm]), y[perm], (0.8, 1.2)).item(), rel=1e-14)
    assert kl_std_normal(Tensor(mu), Tensor(sigma)).item() == pytest.approx(
        kl_std_normal(Tensor(mu[perm]), Tensor(sigma[perm])).item(), rel=1e-14)
    assert ce_multiclass(Tensor(att), lab).item() == pytest.approx(
        ce_multiclass(Tensor(att[perm]), lab[perm]).item(), rel=1e-14)

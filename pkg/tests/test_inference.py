"""Forward-backward recursions against brute-force path enumeration."""

import numpy as np
import pytest

from mdplearn.builtin import reber_model, street_crossing_model
from mdplearn.inference import (
    ZeroLikelihoodError,
    backward,
    forward,
    forward_backward,
    log_likelihood,
    posteriors,
)
from mdplearn.models import Observation, VocabularyError

from conftest import (
    degenerate_posterior_model,
    make_random_model,
    random_observation,
    sample_dataset,
)
from oracles import enum_likelihood, enum_posteriors


def reber_obs(*letters):
    labels = ["start", *letters]
    return Observation(labels, ["next"] * (len(labels) - 1))


def naive_trellis(model, obs):
    """Unscaled forward/backward by the textbook recursions."""
    labels = [model.alphabet.index(l) for l in obs.labels]
    actions = [model.actions.index(a) for a in obs.actions]
    T, S = obs.length, model.n_states
    alpha = np.zeros((S, T))
    alpha[:, 0] = model.iota[labels[0]]
    for t in range(1, T):
        alpha[:, t] = alpha[:, t - 1] @ model.tau[actions[t - 1], :, labels[t], :]
    beta = np.zeros((S, T))
    beta[:, T - 1] = 1.0
    for t in range(T - 2, -1, -1):
        beta[:, t] = model.tau[actions[t], :, labels[t + 1], :] @ beta[:, t + 1]
    return alpha, beta


class TestForward:
    def test_reber_prefix_likelihood(self):
        # start B T X: 1.0 * 0.5 * 0.4
        assert log_likelihood(reber_model(), reber_obs("B", "T", "X")) == pytest.approx(
            np.log(0.2), abs=1e-12
        )

    def test_reber_columns_follow_the_chain(self):
        alpha, scale = forward(reber_model(), reber_obs("B", "T"))
        # the grammar is deterministic on this prefix, so each scaled column
        # is a point mass on the unique compatible state
        np.testing.assert_array_equal(alpha[:, 0], np.eye(7)[0])
        np.testing.assert_array_equal(alpha[:, 1], np.eye(7)[1])
        np.testing.assert_array_equal(alpha[:, 2], np.eye(7)[2])
        np.testing.assert_allclose(scale, [1.0, 1.0, 0.5])

    def test_street_hand_example(self):
        model = street_crossing_model(0.75)
        obs = Observation(["start", "left", "bump"], ["stay", "move"])
        assert log_likelihood(model, obs) == pytest.approx(np.log(0.75), abs=1e-12)

    def test_scale_zero_marks_dead_step(self):
        alpha, scale = forward(reber_model(), reber_obs("B", "E"))
        assert scale[0] == 1.0 and scale[1] == 1.0
        assert scale[2] == 0.0
        np.testing.assert_array_equal(alpha[:, 2], 0.0)

    def test_impossible_first_label(self):
        assert log_likelihood(reber_model(), Observation(["E"])) == float("-inf")

    def test_unknown_symbols_raise(self):
        model = reber_model()
        with pytest.raises(VocabularyError):
            log_likelihood(model, Observation(["start", "Q"], ["next"]))
        with pytest.raises(VocabularyError):
            log_likelihood(model, Observation(["start", "B"], ["jump"]))


class TestScalingTransparency:
    def test_unscaled_reconstruction_matches_naive_dp(self, rng):
        for _ in range(25):
            model = make_random_model(rng)
            for obs in sample_dataset(model, rng, 3, max_length=6).sequences:
                trellis = forward_backward(model, obs)
                alpha_un, beta_un = naive_trellis(model, obs)
                np.testing.assert_allclose(
                    trellis.alpha_unscaled(), alpha_un, rtol=1e-12, atol=1e-300
                )
                np.testing.assert_allclose(
                    trellis.beta_unscaled(), beta_un, rtol=1e-12, atol=1e-300
                )

    def test_alpha_beta_product_is_normalized(self, rng):
        for _ in range(25):
            model = make_random_model(rng)
            for obs in sample_dataset(model, rng, 3, max_length=6).sequences:
                trellis = forward_backward(model, obs)
                np.testing.assert_allclose(
                    (trellis.alpha * trellis.beta).sum(axis=0),
                    np.ones(obs.length),
                    rtol=1e-12,
                )

    def test_street_unscaled_backward_values(self):
        model = street_crossing_model(0.75)
        obs = Observation(["start", "left", "bump"], ["stay", "move"])
        trellis = forward_backward(model, obs)
        beta_un = trellis.beta_unscaled()
        # from s1 at step 0: reach left (0.75) then bump for sure
        assert beta_un[0, 0] == pytest.approx(0.75, abs=1e-15)
        # states s3 and hit can still emit bump under move at step 1
        np.testing.assert_allclose(beta_un[:, 1], [0, 0, 1, 1, 0], atol=1e-15)


class TestAgainstEnumeration:
    def test_likelihood_matches_oracle(self, rng):
        checked = 0
        for _ in range(40):
            model = make_random_model(rng)
            for obs in sample_dataset(model, rng, 2, max_length=5).sequences:
                want = enum_likelihood(model, obs)
                got = log_likelihood(model, obs)
                assert got == pytest.approx(np.log(want), rel=1e-10)
                checked += 1
        assert checked >= 40

    def test_impossible_observations_agree_with_oracle(self, rng):
        # sparse built-ins: most random symbol strings have probability zero
        seen_zero = seen_positive = 0
        for model in (reber_model(), street_crossing_model(0.75)):
            for _ in range(40):
                obs = random_observation(model, rng, int(rng.integers(1, 5)))
                want = enum_likelihood(model, obs)
                got = log_likelihood(model, obs)
                if want == 0.0:
                    seen_zero += 1
                    assert got == float("-inf")
                else:
                    seen_positive += 1
                    assert got == pytest.approx(np.log(want), rel=1e-10)
        assert seen_zero > 0 and seen_positive > 0

    def test_posteriors_match_oracle(self, rng):
        for _ in range(30):
            model = make_random_model(rng)
            for obs in sample_dataset(model, rng, 2, max_length=5).sequences:
                post = posteriors(model, obs)
                gamma_want, xi_want = enum_posteriors(model, obs)
                np.testing.assert_allclose(post.gamma, gamma_want, rtol=1e-10, atol=1e-12)
                np.testing.assert_allclose(post.xi_core, xi_want, rtol=1e-10, atol=1e-12)


class TestPosteriors:
    def test_gamma_columns_sum_to_one(self, rng):
        model = make_random_model(rng)
        obs = sample_dataset(model, rng, 1, max_length=6).sequences[0]
        post = posteriors(model, obs)
        np.testing.assert_allclose(post.gamma.sum(axis=0), 1.0, rtol=1e-12)

    def test_xi_marginals_recover_gamma(self, rng):
        for _ in range(10):
            model = make_random_model(rng)
            obs = sample_dataset(model, rng, 1, max_length=6).sequences[0]
            if obs.length < 2:
                continue
            post = posteriors(model, obs)
            # row marginal at t is gamma[:, t]; column marginal is gamma[:, t+1]
            np.testing.assert_allclose(
                post.xi_core.sum(axis=2).T, post.gamma[:, :-1], rtol=1e-10, atol=1e-14
            )
            np.testing.assert_allclose(
                post.xi_core.sum(axis=1).T, post.gamma[:, 1:], rtol=1e-10, atol=1e-14
            )

    def test_dense_xi_places_mass_on_observed_plane_only(self):
        model = street_crossing_model(0.75)
        obs = Observation(["start", "left", "bump"], ["stay", "move"])
        post = posteriors(model, obs)
        stay = post.xi("stay")
        move = post.xi("move")
        left = model.alphabet.index("left")
        bump = model.alphabet.index("bump")
        # step 0 was (stay, left), step 1 was (move, bump)
        assert stay[0, :, left, :].sum() == pytest.approx(1.0, abs=1e-12)
        assert stay[1].sum() == 0.0
        assert move[0].sum() == 0.0
        assert move[1, :, bump, :].sum() == pytest.approx(1.0, abs=1e-12)
        # no mass outside the observed label plane
        mask = np.ones(model.n_labels, dtype=bool)
        mask[left] = False
        assert stay[0, :, mask, :].sum() == 0.0

    def test_single_label_observation(self):
        model = street_crossing_model(0.75)
        post = posteriors(model, Observation(["start"]))
        np.testing.assert_allclose(post.gamma[:, 0], [1, 0, 0, 0, 0])
        assert post.xi_core.shape == (0, 5, 5)

    def test_zero_likelihood_raises(self):
        with pytest.raises(ZeroLikelihoodError, match="zero likelihood"):
            posteriors(reber_model(), reber_obs("B", "E"))

    def test_unresolvable_posteriors_raise(self):
        # Nearly all forward mass sits in a state whose suffix is impossible;
        # the surviving branch is subnormal, so the backward rescaling blows
        # up and no posterior can be resolved at double precision.
        model = degenerate_posterior_model()
        obs = Observation(["x", "m", "y"], ["go", "go"])
        assert np.isfinite(log_likelihood(model, obs))
        with pytest.raises(ZeroLikelihoodError, match="double precision"):
            posteriors(model, obs)

    def test_trellis_can_be_supplied(self):
        model = reber_model()
        obs = reber_obs("B", "T", "X")
        trellis = forward_backward(model, obs)
        a = posteriors(model, obs, trellis)
        b = posteriors(model, obs)
        np.testing.assert_array_equal(a.gamma, b.gamma)


class TestBackwardStandalone:
    def test_recomputes_scale_when_not_given(self):
        model = reber_model()
        obs = reber_obs("B", "T", "X")
        _, scale = forward(model, obs)
        np.testing.assert_array_equal(backward(model, obs), backward(model, obs, scale))

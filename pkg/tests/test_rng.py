import numpy as np

from rfisim import rng


def test_draw_words_deterministic():
    a = rng.draw_words(42, rng.ENGINE, step=3, slot=7, n_words=12)
    b = rng.draw_words(42, rng.ENGINE, step=3, slot=7, n_words=12)
    assert np.array_equal(a, b)


def test_batch_rows_match_single_draws():
    n_words = 10
    batch = rng.draw_words_batch(99, rng.ENGINE, step=5, slot0=3, n_slots=6, n_words=n_words)
    for i in range(6):
        single = rng.draw_words(99, rng.ENGINE, step=5, slot=3 + i, n_words=n_words)
        assert np.array_equal(batch[i], single)


def test_streams_disjoint_across_keys():
    base = rng.draw_words(1, rng.ENGINE, 0, 0, 8)
    assert not np.array_equal(base, rng.draw_words(2, rng.ENGINE, 0, 0, 8))
    assert not np.array_equal(base, rng.draw_words(1, rng.INIT, 0, 0, 8))
    assert not np.array_equal(base, rng.draw_words(1, rng.ENGINE, 1, 0, 8))
    assert not np.array_equal(base, rng.draw_words(1, rng.ENGINE, 0, 1, 8))


def test_uniforms_open_interval():
    w = rng.draw_words(7, rng.ENGINE, 0, 0, 4096)
    u = rng.uniforms_from_words(w)
    assert np.all(u > 0.0) and np.all(u < 1.0)


def test_gaussian_moments():
    w = rng.draw_words_batch(11, rng.INIT, 0, 0, 200, 1000)
    g = rng.gaussians_from_words(w).ravel()
    n = g.size
    assert abs(g.mean()) < 4.0 / np.sqrt(n)
    assert abs(g.std() - 1.0) < 4.0 / np.sqrt(n)


def test_bounded_gaussians_clip():
    w = rng.draw_words_batch(13, rng.INIT, 0, 0, 100, 2000)
    g = rng.bounded_gaussians_from_words(w)
    assert np.all(np.abs(g) <= rng.NOISE_CLIP_SIGMA)


def test_gaussian_words_needed_even():
    assert rng.gaussian_words_needed(1) == 2
    assert rng.gaussian_words_needed(2) == 2
    assert rng.gaussian_words_needed(11) == 12

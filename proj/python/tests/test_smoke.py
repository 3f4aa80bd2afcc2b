import numpy as np
import pytest

import rawpc

MICRO = """
frontend_channels = 8
kernel_len = 32
input_length = 600
channels = 4
cells = 2
expand_positions = 1
gru_hidden = 8
embedding_dim = 8
max_masked_filters = 2
search_epochs = 3
warmup_epochs = 2
search_batch = 4
train_epochs = 2
train_batch = 4
"""


def micro_config():
    return rawpc.RunConfig.toy().with_overrides(MICRO)


def test_eer_fixtures():
    assert rawpc.compute_eer([2, 3], [0, 1])[0] == 0.0
    assert rawpc.compute_eer([1, 3], [0, 2])[0] == pytest.approx(0.25, abs=1e-15)
    assert rawpc.compute_eer([1, 2, 2, 5], [5, 2, 1, 2])[0] == pytest.approx(0.5, abs=1e-15)


def test_min_tdcf_perfect_separation_is_zero():
    assert rawpc.min_tdcf([2.0, 3.0], [0.0, 1.0], 1.0, 10.0) == 0.0


def numpy_derive(alpha):
    nodes, row = [], 0
    for node in range(4):
        inputs = node + 2
        block = alpha[row : row + inputs, 1:]
        ops = block.argmax(axis=1) + 1
        strength = block.max(axis=1)
        keep = sorted(np.argsort(-strength, kind="stable")[:2])
        nodes.append(tuple((int(i), int(ops[i])) for i in keep))
        row += inputs
    return nodes


def test_derive_genotype_matches_numpy():
    names = ["none", "skip", "conv3", "conv5", "dilconv3", "dilconv5", "maxpool3", "avgpool3"]
    rng = np.random.default_rng(3)
    for _ in range(50):
        a, b = rng.normal(size=(14, 8)), rng.normal(size=(14, 8))
        g = rawpc.derive_genotype(a, b)
        want = [tuple((i, names[o]) for i, o in node) for node in numpy_derive(a)]
        assert [tuple(tuple(e) for e in node) for node in g.normal] == want
        assert rawpc.derive_genotype(a + 3.0, b - 1.0) == g
    assert rawpc.Genotype.from_text(g.to_text()) == g
    with pytest.raises(ValueError):
        rawpc.derive_genotype(np.zeros((13, 8)), np.zeros((14, 8)))


def test_sinc_kernel_passband():
    sr, k = 16000.0, 128
    kern = rawpc.sinc_kernels([1000.0, 500.0], [2000.0, 500.0], k, sr)
    assert kern.shape == (2, k)
    assert np.all(kern[1] == 0.0)
    spec = np.abs(np.fft.rfft(kern[0], 8192))
    freqs = np.fft.rfftfreq(8192, 1.0 / sr)
    assert 1000.0 <= freqs[spec.argmax()] <= 2000.0
    stop = (freqs < 1000.0 - 3.3 * sr / k) | (freqs > 2000.0 + 3.3 * sr / k)
    assert 20 * np.log10(spec[stop].max() / spec.max()) <= -20.0


def test_sample_mask_law():
    draws = rawpc.sample_mask(9, 64, 16, 2000)
    assert all(0 <= c < 16 and b + c <= 64 for b, c in draws)
    assert len({c for _, c in draws}) == 16
    assert all(c == 0 for _, c in rawpc.sample_mask(9, 64, 1, 100))


def test_cosine_endpoints():
    assert rawpc.cosine_lr(0, 100, 5e-5, 2e-5) == pytest.approx(5e-5, abs=1e-12)
    assert rawpc.cosine_lr(99, 100, 5e-5, 2e-5) == 2e-5


def test_synth_task_is_seeded():
    w1, y1 = rawpc.synth_task(4, 3, 4000.0, 0.5)
    w2, y2 = rawpc.synth_task(4, 3, 4000.0, 0.5)
    assert w1.shape == (6, 2000)
    assert sorted(y1.tolist()) == [0, 0, 0, 1, 1, 1]
    assert np.array_equal(w1, w2) and np.array_equal(y1, y2)


def test_full_size_structure():
    m = rawpc.Model.discrete(rawpc.RunConfig(), rawpc.reference_genotype())
    c = m.param_counts()
    assert c["gru"] == 18892800
    assert abs(c["total"] - 24.48e6) / 24.48e6 <= 0.03


def test_micro_search_and_training():
    cfg = micro_config()
    wt, yt = rawpc.synth_task(1, 6, 4000.0, 0.15)
    wd, yd = rawpc.synth_task(2, 3, 4000.0, 0.15)
    s = rawpc.SearchRun(cfg, list(wt), yt.tolist(), list(wd), yd.tolist())
    while not s.done:
        s.run_epoch()
    hist = s.alpha_history()
    assert np.array_equal(hist[0][0], hist[1][0])
    assert not np.array_equal(hist[1][0], hist[2][0])
    t = rawpc.ScratchRun(cfg, s.genotype(), list(wt), yt.tolist(), list(wd), yd.tolist())
    stats = [t.run_epoch() for _ in range(2)]
    assert t.done
    assert stats[-1]["lr"] == cfg_lr_min(cfg)
    scores = t.best_model().scores(wd)
    assert len(scores) == len(yd) and np.all(np.isfinite(scores))


def cfg_lr_min(cfg):
    for line in cfg.to_text().splitlines():
        key, _, value = line.partition("=")
        if key.strip() == "lr_min":
            return float(value)
    raise KeyError("lr_min")

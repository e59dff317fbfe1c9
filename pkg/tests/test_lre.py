import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import normal_equations

from snnprune import lre
from snnprune.errors import ContractViolation, DegenerateDesignError
from snnprune.lre import LreModel, LrePoint
from snnprune.prune import pre_finetune_synops, PruningPolicy
from snnprune.train import TrainConfig


def pts(pairs):
    return [LrePoint(i, float(a), float(b)) for i, (a, b) in enumerate(pairs)]


def test_exact_line():
    m = lre.fit(pts([(x, 0.8 * x + 5) for x in (10.0, 20.0, 40.0, 80.0)]))
    assert m.w == pytest.approx(0.8, abs=1e-12)
    assert m.b == pytest.approx(5.0, abs=1e-9)
    assert m.mse == pytest.approx(0.0, abs=1e-9)
    assert m.r2 == pytest.approx(1.0, abs=1e-12)


def test_two_points_always_perfect():
    m = lre.fit(pts([(3.0, 11.0), (7.0, 2.0)]))
    assert m.r2 == pytest.approx(1.0)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.floats(1, 1e6), st.floats(1, 1e6)), min_size=3, max_size=30))
def test_fit_matches_normal_equations(pairs):
    x = np.array([a for a, _ in pairs])
    if np.ptp(x) < 1e-3 * np.max(x):
        return
    y = np.array([b for _, b in pairs])
    m = lre.fit(pts(pairs))
    w, b = normal_equations(x, y)
    assert m.w == pytest.approx(w, rel=1e-9, abs=1e-9)
    assert m.b == pytest.approx(b, rel=1e-9, abs=1e-9 * (1 + np.abs(y).max()))


def test_degenerate_design():
    with pytest.raises(DegenerateDesignError):
        lre.fit(pts([(5.0, 1.0), (5.0, 2.0), (5.0, 3.0)]))
    with pytest.raises(ContractViolation):
        lre.fit(pts([(5.0, 1.0)]))


def test_predict_examples():
    assert lre.predict(LreModel(1.0, 0.0), 123.0) == 123.0
    assert lre.predict(LreModel(0.8, 100.0), 1000.0) == pytest.approx(900.0)
    assert lre.predict(LreModel(0.5, -100.0), 100.0) == 0.0
    with pytest.raises(ContractViolation):
        lre.predict(LreModel(1.0, 0.0), -1.0)


def test_metrics_rules():
    hold = pts([(10.0, 13.0), (20.0, 23.0), (30.0, 33.0)])
    assert lre.metrics(LreModel(1.0, 3.0), hold) == (0.0, 1.0)
    rmse, r2 = lre.metrics(LreModel(0.0, 23.0), hold)
    assert r2 <= 0 and rmse > 0
    flat = pts([(10.0, 5.0), (20.0, 5.0)])
    assert lre.metrics(LreModel(0.0, 5.0), flat)[1] is None
    with pytest.raises(ContractViolation):
        lre.metrics(LreModel(1.0, 0.0), [])


def test_points_must_be_positive():
    with pytest.raises(ContractViolation):
        LrePoint(0, 0.0, 1.0)


def test_split_holdout_takes_last_ids():
    points = pts([(i + 1.0, i + 2.0) for i in range(8)])[::-1]
    fit_set, hold = lre.split_holdout(points, 3)
    assert [p.policy_id for p in hold] == [5, 6, 7]
    assert [p.policy_id for p in fit_set] == list(range(5))
    with pytest.raises(ContractViolation):
        lre.split_holdout(points, 8)


def test_finetune_schedule_fraction():
    cfg = lre.finetune_config(TrainConfig(epochs=12, warmup_epochs=1), 0.25)
    assert (cfg.epochs, cfg.warmup_epochs) == (3, 0)
    assert lre.finetune_config(TrainConfig(epochs=2, warmup_epochs=1), 0.25).epochs == 1


def test_gen_dataset_needs_policies(trained_small, blobs):
    with pytest.raises(ContractViolation):
        lre.gen_dataset(trained_small, blobs[0], 0, TrainConfig(epochs=1, warmup_epochs=0))


def test_gen_dataset_reproducible(trained_small, blobs):
    data = blobs[0].subset(np.arange(96))
    ft = TrainConfig(epochs=1, warmup_epochs=0, batch_size=32)
    kw = dict(seed=5, subset_size=64, include_identity=True)
    a = lre.gen_dataset(trained_small, data, 4, ft, **kw)
    b = lre.gen_dataset(trained_small, data, 4, ft, **kw)
    assert a == b
    identity = PruningPolicy.identity(len(trained_small.prunable))
    assert a[0].pre == pre_finetune_synops(trained_small, identity, data, 64)
    pres = [p.pre for p in a]
    assert max(pres) > min(pres)

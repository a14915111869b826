import numpy as np
import pytest

from dncc.data import synth_blobs, train_val_split
from dncc.errors import ConfigurationError, TrainingAborted
from dncc.losses import DnccConfig, LambdaSchedule
from dncc.model import BackboneSpec, EnsembleConfig, EnsembleModel
from dncc.trainer import (
    MetricsLog,
    TrainConfig,
    TrainState,
    evaluate,
    load_training_checkpoint,
    lr_at,
    sgd_step,
    train,
)


@pytest.fixture(scope="module")
def split():
    return train_val_split(synth_blobs(seed=0, per_class_n=100, dim=8, spread=0.75), seed=0)


def small_model(M=4, depth=0, mode="split", seed=0):
    return EnsembleModel(BackboneSpec(8, (16, 16), branch_depth=depth), EnsembleConfig(M, 4, mode, seed))


def small_cfg(epochs=6, lam="ramp:1e-2", **kw):
    return TrainConfig(epochs=epochs, batch_size=32, lr_milestones=(epochs // 2,),
                       dncc=DnccConfig(LambdaSchedule.parse(lam)), **kw)


class TestSgd:
    def test_plain_gradient_descent(self):
        p, v = np.array([1.0, -2.0]), np.zeros(2)
        sgd_step([p], [np.array([0.5, 0.25])], [v], 0.1, 0.0)
        np.testing.assert_array_equal(p, [1.0 - 0.1 * 0.5, -2.0 - 0.1 * 0.25])

    def test_zero_gradient_no_change(self):
        p, v = np.array([3.0]), np.zeros(1)
        sgd_step([p], [np.zeros(1)], [v], 0.1, 0.9)
        assert p[0] == 3.0

    def test_two_step_recurrence(self):
        p, v = np.array([1.0]), np.zeros(1)
        g1, g2, lr, mu = 0.5, -0.2, 0.1, 0.9
        sgd_step([p], [np.array([g1])], [v], lr, mu)
        sgd_step([p], [np.array([g2])], [v], lr, mu)
        v1 = g1
        v2 = mu * v1 + g2
        assert p[0] == (1.0 - lr * v1) - lr * v2


class TestSchedule:
    @pytest.mark.parametrize("epoch,expected", [(0, 0.1), (59, 0.1), (60, 0.01), (120, 1e-3), (160, 1e-4)])
    def test_step_decay(self, epoch, expected):
        assert lr_at(TrainConfig(), epoch) == pytest.approx(expected, rel=1e-14)

    def test_bad_milestones(self):
        with pytest.raises(ConfigurationError):
            TrainConfig(epochs=10, lr_milestones=(5, 3))

    def test_config_dict_round_trip(self):
        cfg = small_cfg(lam="const:5e-4", momentum=0.5)
        assert TrainConfig.from_dict(cfg.to_dict()) == cfg


class TestTrain:
    def test_deterministic(self, split):
        _, a = train(small_model(), split.train, split.val, small_cfg())
        _, b = train(small_model(), split.train, split.val, small_cfg())
        assert a == b
        assert [r.deterministic() for r in a] == [r.deterministic() for r in b]

    def test_resume_equals_uninterrupted(self, split, tmp_path):
        cfg = small_cfg(epochs=10)
        full_model, full = train(small_model(), split.train, split.val, cfg)

        ck = tmp_path / "c.ckpt"
        part = MetricsLog()
        train(small_model(), split.train, split.val, cfg, metrics=part, checkpoint_path=ck, stop_after=5)
        assert len(part) == 5
        model, state, _ = load_training_checkpoint(ck)
        train(model, split.train, split.val, cfg, state=state, metrics=part)
        assert part == full
        for k, t in full_model.parameters():
            assert model.params[k].data.tobytes() == t.data.tobytes()

    def test_independent_heads_at_zero_lambda(self, split):
        # fully branched heads with lambda 0 evolve exactly like separately trained models
        cfg = small_cfg(epochs=3, lam="const:0")
        ens = small_model(M=3, depth=2, mode="expand_split")
        singles = []
        for m in range(3):
            one = small_model(M=1, depth=2, mode="expand_split")
            one.load_state_arrays(
                {k: ens.params[k.replace("head0.", f"head{m}.")].data for k in one.params}
            )
            singles.append(one)
        train(ens, split.train, split.val, cfg)
        for m, one in enumerate(singles):
            train(one, split.train, split.val, cfg)
            for k, t in one.parameters():
                np.testing.assert_array_equal(ens.params[k.replace("head0.", f"head{m}.")].data, t.data)

    def test_single_model_loss_decreases(self, split):
        _, log = train(small_model(M=1), split.train, split.val, small_cfg(epochs=5, lam="const:0"))
        losses = [r.train_ensemble_loss for r in log]
        assert all(b < a for a, b in zip(losses, losses[1:]))

    def test_jensen_gap_logged_every_epoch(self, split):
        _, log = train(small_model(), split.train, split.val, small_cfg())
        for r in log:
            assert r.val_ensemble_loss <= r.val_mean_individual_loss + 1e-9
            assert r.val_bregman_information >= 0

    def test_non_finite_aborts_and_keeps_checkpoint(self, split, tmp_path):
        ck = tmp_path / "c.ckpt"
        cfg = small_cfg(epochs=4)
        model = small_model()
        train(model, split.train, split.val, cfg, checkpoint_path=ck, stop_after=1)
        good = ck.read_bytes()
        model.params["head0.out.W"].data[0, 0] = np.nan
        with pytest.raises(TrainingAborted) as err:
            train(model, split.train, split.val, cfg, state=TrainState.fresh(model), checkpoint_path=ck)
        assert err.value.epoch == 0 and err.value.step == 0
        assert ck.read_bytes() == good

    def test_width_mismatch(self, split):
        with pytest.raises(ConfigurationError):
            train(EnsembleModel(BackboneSpec(3), EnsembleConfig(2, 4)), split.train, split.val, small_cfg())


class TestEvaluate:
    def test_identical_heads(self, split):
        m = small_model(M=2, depth=2, mode="expand_split")
        for k in list(m.params):
            if k.startswith("head1."):
                m.params[k].data = m.params[k.replace("head1.", "head0.")].data.copy()
        ev = evaluate(m, split.val)
        assert ev["per_head_accuracy"][0] == ev["per_head_accuracy"][1] == ev["ensemble_accuracy"]
        assert ev["bregman_information"] == 0.0

    def test_near_separable_reaches_full_accuracy(self):
        tr, va, _ = train_val_split(synth_blobs(seed=0, per_class_n=50, dim=8, spread=1e-3), seed=0)
        model, _ = train(small_model(M=2), tr, va, small_cfg(epochs=5, lam="const:0"))
        assert evaluate(model, va)["ensemble_accuracy"] == 1.0


class TestMetricsFiles:
    def test_jsonl_and_csv_round_trip(self, split, tmp_path):
        _, log = train(small_model(), split.train, split.val, small_cfg(epochs=3))
        log.write_jsonl(tmp_path / "m.jsonl")
        log.write_csv(tmp_path / "m.csv")
        assert MetricsLog.read_jsonl(tmp_path / "m.jsonl") == log
        assert MetricsLog.read_csv(tmp_path / "m.csv") == log

    def test_files_exclude_wall_time(self, split, tmp_path):
        _, log = train(small_model(), split.train, split.val, small_cfg(epochs=2))
        log.write_jsonl(tmp_path / "m.jsonl")
        log.write_timing(tmp_path / "t.jsonl")
        assert "wall_time" not in (tmp_path / "m.jsonl").read_text()
        assert "wall_time" in (tmp_path / "t.jsonl").read_text()

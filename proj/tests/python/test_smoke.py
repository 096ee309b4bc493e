import math
import random

import pytest

import resflow


def test_auc_oracle():
    assert resflow.auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75
    with pytest.raises(resflow.UndefinedMetricError):
        resflow.auc([0.1, 0.2], [1, 1])


def test_decode_example():
    ladder = [1, 2, 3, 4, 5]
    assert abs(resflow.decode_expectation([0.9, 0.6, 0.3, 0.1], ladder) - 2.9) < 1e-9
    for v in ladder:
        q = resflow.encode_labels(v, ladder)
        assert resflow.decode_expectation(q, ladder) == v


def test_pearson_self():
    x = [1.0, 2.0, 4.0, 8.0, 16.0]
    r, p = resflow.pearson(x, x)
    assert abs(r - 1.0) < 1e-12
    assert p < 1e-6


def test_metric_helpers():
    assert resflow.weighted_recall([3.0, 2.0, 1.0], [1.0, 0.0, 1.0], 1) == 0.5
    ideal = resflow.ndcg(
        [4.0, 3.0, 2.0, 1.0],
        [True, True, True, False],
        [True, True, False, False],
        [True, False, False, False],
    )
    assert ideal == 1.0


def test_fuse():
    assert abs(resflow.fuse("add", 1.0, 20.0, 0.1, 0.01) - 0.3) < 1e-15
    assert abs(resflow.fuse("mul", 1.0, 1.0, 0.1, 0.01) - 0.01) < 1e-15


def test_fuse_search_recovers_planted_pair():
    rng = random.Random(505)
    lists = []
    for _ in range(40):
        items = []
        for _ in range(25):
            ctr = rng.uniform(0.01, 0.5)
            ctcvr = ctr * rng.uniform(0.001, 0.05)
            items.append((ctr, ctcvr, 0.0))
        # Weights follow the planted formula's ranking, so (1, 20) is the
        # unique weight-optimal grid point.
        ranked = sorted(items, key=lambda t: t[0] + 20.0 * t[1], reverse=True)
        items = [(c, cc, float(len(ranked) - r)) for r, (c, cc, _) in enumerate(ranked)]
        lists.append(items)
    best = resflow.fuse_search(
        lists, family="add", k=10, alphas=[0.5, 1.0, 2.0], betas=[1.0, 5.0, 20.0, 50.0]
    )
    assert (best["alpha"], best["beta"]) == (1.0, 20.0)
    assert len(best["table"]) == 12
    assert best["metric"] == max(m for _, _, m in best["table"])


def test_gradcheck():
    out = resflow.gradcheck(seed=1, instances=3)
    assert out["ok"]
    assert out["failures"] == 0
    assert out["worst_rel_err"] < 1e-4


def test_presets():
    assert "funnel" in resflow.presets()


def test_end_to_end_training(tmp_path):
    manifest = resflow.generate_funnel(
        str(tmp_path / "data"), seed=5, lists=150, list_size=10, users=120, items=90
    )
    config = "\n".join(
        [
            "data.manifest = " + manifest,
            "model.mode = resflow",
            "model.tasks = click,atc,order",
            "model.widths = 6,1",
            "model.emb_dim = 4",
            "train.epochs = 1",
            "train.batch_size = 256",
            "train.seed = 3",
            "eval.ranking_task = order",
            "eval.k = 5",
        ]
    )
    out = resflow.run_training(config, out_dir=str(tmp_path / "run"))
    assert out["steps"] > 0
    assert len(out["loss_trace"]) == out["steps"]
    assert all(math.isfinite(v) for v in out["loss_trace"])
    metrics = out["metrics"]
    assert 0.0 < metrics["auc.order"] < 1.0
    assert "wr@5" in metrics and "ndcg" in metrics

    again = resflow.run_training(config)
    assert again["metrics"] == metrics  # fixed seed reproduces exactly

    report = resflow.evaluate_checkpoint(
        str(tmp_path / "run" / "model.ckpt"), manifest, ks=[5], ranking_task="order"
    )
    assert "auc.order" in report["metrics"]
    assert "wr@5" in report["metrics"]

    with pytest.raises(resflow.DataError):
        resflow.evaluate_checkpoint(str(tmp_path / "absent.ckpt"), manifest)

    with pytest.raises(resflow.ConfigError):
        resflow.run_training("model.widths = 4,1\n")
